//! Header lines recording what produced an output file.

use std::path::Path;

use anyhow::Context;
use sha2::{Digest, Sha256};
use switchfm::tables::{Alpha1Source, TableKind, TableSet};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn tool_line() -> String {
    format!("tool=switchfm-cli {}", env!("CARGO_PKG_VERSION"))
}

/// One `table=<id> sha256=<hash>` line per table; file-backed tables are
/// hashed as stored, the built-in first-stage table by its text form.
pub fn table_lines(dir: &Path, source: Alpha1Source, tables: &TableSet) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for (kind, table) in [
        (TableKind::ZPercentiles, &tables.z),
        (TableKind::DfGlsQuantiles, &tables.dfgls),
        (TableKind::Alpha1Levels, &tables.alpha1),
    ] {
        let hash = if kind == TableKind::Alpha1Levels && source == Alpha1Source::Paper {
            sha256_hex(table.to_text().as_bytes())
        } else {
            sha256_file(&dir.join(kind.file_name()))?
        };
        out.push(format!("table={} sha256={hash}", table.id()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
