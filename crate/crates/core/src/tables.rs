//! Simulated critical-value tables: percentiles of the null limit of the
//! HAC t-statistic, DF-GLS quantile curves over the local-to-unity grid, and
//! the calibrated first-stage levels of the switching test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{stream, StreamKind};
use crate::stats::{isotonic_increasing, normal_quantile, quantile_sorted, sort_floats};
use crate::unitroot::{dfgls_lag0, invert_curves};

pub const FORMAT_VERSION: u32 = 1;
const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    ZPercentiles,
    DfGlsQuantiles,
    Alpha1Levels,
}

impl TableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TableKind::ZPercentiles => "z_percentiles",
            TableKind::DfGlsQuantiles => "dfgls_quantiles",
            TableKind::Alpha1Levels => "alpha1_levels",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "z_percentiles" => Ok(TableKind::ZPercentiles),
            "dfgls_quantiles" => Ok(TableKind::DfGlsQuantiles),
            "alpha1_levels" => Ok(TableKind::Alpha1Levels),
            other => Err(Error::Table(format!("unknown table kind '{other}'"))),
        }
    }

    /// Conventional file name inside a tables directory.
    pub fn file_name(self) -> &'static str {
        match self {
            TableKind::ZPercentiles => "z_percentiles.txt",
            TableKind::DfGlsQuantiles => "dfgls_quantiles.txt",
            TableKind::Alpha1Levels => "alpha1_levels.txt",
        }
    }
}

/// Levels 0.005, 0.010, ..., 0.995.
pub fn standard_levels() -> Vec<f64> {
    (1..200).map(|i| i as f64 * 0.005).collect()
}

/// Local-to-unity grid for the Z(c, delta) percentiles, ascending.
pub fn z_c_grid() -> Vec<f64> {
    let mut g: Vec<f64> = vec![-190.0, -160.0];
    g.extend((-13..=-2).map(|k| k as f64 * 10.0));
    g.extend([-10.0, -5.0, 0.0, 5.0]);
    g
}

pub fn z_delta_grid() -> Vec<f64> {
    vec![-1.0, -0.9, -0.6, -0.3, 0.0]
}

/// Grid for the DF-GLS quantile curves: coarse in the stationary region,
/// spacing 2 near the unit root.
pub fn dfgls_c_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=19).map(|k| -250.0 + 10.0 * k as f64).collect();
    g.extend((0..=31).map(|k| -58.0 + 2.0 * k as f64));
    g
}

/// Region over which the first-stage levels are calibrated.
pub fn calibration_c_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=10).map(|k| -120.0 + 10.0 * k as f64).collect();
    g.extend([-15.0, -10.0, -5.0, -2.0, 0.0, 2.0, 4.0]);
    g
}

/// First-stage levels scanned by the calibration, 0.01..0.98.
pub fn alpha1_grid() -> Vec<f64> {
    (1..=98).map(|i| i as f64 / 100.0).collect()
}

/// Long-run correlations at which the first-stage levels are reported.
pub fn alpha1_delta_grid() -> Vec<f64> {
    PAPER_ALPHA1.iter().map(|r| r.0).collect()
}

/// Published first-stage levels `(delta_tau, alpha1_left, alpha1_right)`.
pub const PAPER_ALPHA1: [(f64, f64, f64); 20] = [
    (-0.797, 0.14, 0.43),
    (-0.758, 0.15, 0.50),
    (-0.718, 0.17, 0.51),
    (-0.678, 0.18, 0.56),
    (-0.638, 0.19, 0.58),
    (-0.598, 0.20, 0.62),
    (-0.558, 0.21, 0.65),
    (-0.518, 0.22, 0.68),
    (-0.478, 0.23, 0.70),
    (-0.439, 0.24, 0.73),
    (-0.399, 0.26, 0.75),
    (-0.359, 0.28, 0.82),
    (-0.319, 0.28, 0.89),
    (-0.279, 0.28, 0.92),
    (-0.239, 0.30, 0.98),
    (-0.199, 0.32, 0.98),
    (-0.159, 0.37, 0.98),
    (-0.119, 0.50, 0.98),
    (-0.080, 0.61, 0.98),
    (-0.040, 0.79, 0.98),
];

/// Switching thresholds and nominal level of the two-sided test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchThresholds {
    pub c_bar_l: f64,
    pub c_under_l: f64,
    pub alpha2: f64,
    pub epsilon: f64,
}

impl Default for SwitchThresholds {
    fn default() -> Self {
        Self {
            c_bar_l: -90.0,
            c_under_l: -100.0,
            alpha2: 0.1,
            epsilon: 0.04,
        }
    }
}

impl SwitchThresholds {
    pub fn new(c_bar_l: f64, c_under_l: f64, alpha2: f64, epsilon: f64) -> Result<Self> {
        if !(c_bar_l < 0.0 && c_under_l < 0.0) {
            return Err(Error::domain("switching thresholds must be negative"));
        }
        if !(alpha2 > 0.0 && alpha2 < 1.0 && epsilon >= 0.0 && epsilon < alpha2) {
            return Err(Error::domain("need 0 <= epsilon < alpha2 < 1"));
        }
        Ok(Self {
            c_bar_l,
            c_under_l,
            alpha2,
            epsilon,
        })
    }

    /// Level at which the calibrated test is run, `alpha2 - epsilon`.
    pub fn alpha2_tilde(&self) -> f64 {
        self.alpha2 - self.epsilon
    }
}

/// Where the first-stage levels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha1Source {
    /// The published table.
    Paper,
    /// `alpha1_levels.txt` in the tables directory.
    Generated,
}

impl Alpha1Source {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "generated" => Ok(Self::Generated),
            other => Err(Error::Config(format!("unknown alpha1 source '{other}' (paper|generated)"))),
        }
    }
}

/// The three tables the switching test reads.
#[derive(Debug, Clone)]
pub struct TableSet {
    pub z: CriticalValueTable,
    pub dfgls: CriticalValueTable,
    pub alpha1: CriticalValueTable,
}

impl TableSet {
    pub fn new(z: CriticalValueTable, dfgls: CriticalValueTable, alpha1: CriticalValueTable) -> Result<Self> {
        z.expect(TableKind::ZPercentiles)?;
        dfgls.expect(TableKind::DfGlsQuantiles)?;
        alpha1.expect(TableKind::Alpha1Levels)?;
        for t in [&z, &dfgls, &alpha1] {
            t.validate()?;
        }
        Ok(Self { z, dfgls, alpha1 })
    }

    /// Loads the tables from `dir`; missing files are a configuration error.
    pub fn load(dir: &Path, source: Alpha1Source) -> Result<Self> {
        let read = |kind: TableKind| {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                return Err(Error::Config(format!("missing table {}", path.display())));
            }
            CriticalValueTable::read(&path)
        };
        let alpha1 = match source {
            Alpha1Source::Paper => paper_alpha1_table(),
            Alpha1Source::Generated => read(TableKind::Alpha1Levels)?,
        };
        Self::new(read(TableKind::ZPercentiles)?, read(TableKind::DfGlsQuantiles)?, alpha1)
    }
}

/// A simulated lookup table with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub kind: TableKind,
    pub c_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Row-major values: `(c, delta, level)` for Z percentiles, `(c, level)`
    /// for DF-GLS quantiles and `(delta, [left, right])` for first-stage
    /// levels.
    pub values: Vec<f64>,
    pub sim_t: usize,
    pub replications: usize,
    pub seed: u64,
    pub version: u32,
    pub extra: BTreeMap<String, String>,
}

fn find_index(grid: &[f64], v: f64, what: &str) -> Result<usize> {
    grid.iter()
        .position(|g| (g - v).abs() <= LEVEL_TOL)
        .ok_or_else(|| Error::Table(format!("{what} {v} is not on the table grid")))
}

fn check_sorted(grid: &[f64], what: &str) -> Result<()> {
    if grid.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::Table(format!("{what} grid is not strictly increasing")))
    }
}

impl CriticalValueTable {
    pub fn id(&self) -> String {
        format!(
            "{}:v{}:T{}:R{}:S{}",
            self.kind.as_str(),
            self.version,
            self.sim_t,
            self.replications,
            self.seed
        )
    }

    fn expect(&self, kind: TableKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Table(format!(
                "expected {} table, got {}",
                kind.as_str(),
                self.kind.as_str()
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sorted(&self.c_grid, "c")?;
        check_sorted(&self.delta_grid, "delta")?;
        check_sorted(&self.alpha_grid, "level")?;
        let expected = match self.kind {
            TableKind::ZPercentiles => self.c_grid.len() * self.delta_grid.len() * self.alpha_grid.len(),
            TableKind::DfGlsQuantiles => self.c_grid.len() * self.alpha_grid.len(),
            TableKind::Alpha1Levels => self.delta_grid.len() * 2,
        };
        if self.values.len() != expected {
            return Err(Error::Table(format!(
                "table holds {} values, grid implies {expected}",
                self.values.len()
            )));
        }
        if self.delta_grid.iter().any(|d| !(-1.0..=0.0).contains(d)) {
            return Err(Error::Table("delta grid must lie in [-1, 0]".into()));
        }
        Ok(())
    }

    /// DF-GLS quantile curve over the c grid at one level.
    pub fn dfgls_curve(&self, level: f64) -> Result<Vec<f64>> {
        self.expect(TableKind::DfGlsQuantiles)?;
        let a = find_index(&self.alpha_grid, level, "level")?;
        let na = self.alpha_grid.len();
        Ok((0..self.c_grid.len()).map(|i| self.values[i * na + a]).collect())
    }

    /// Percentile of `Z(c, delta)` at `level`, interpolating linearly in `c`
    /// between grid points.
    pub fn z_percentile(&self, c: f64, delta: f64, level: f64) -> Result<f64> {
        self.expect(TableKind::ZPercentiles)?;
        let d = find_index(&self.delta_grid, delta, "delta")?;
        let a = find_index(&self.alpha_grid, level, "level")?;
        let (nd, na) = (self.delta_grid.len(), self.alpha_grid.len());
        let at = |ci: usize| self.values[(ci * nd + d) * na + a];
        let g = &self.c_grid;
        if let Ok(ci) = find_index(g, c, "c") {
            return Ok(at(ci));
        }
        if c < g[0] || c > g[g.len() - 1] {
            return Err(Error::Table(format!("c = {c} outside the table range")));
        }
        let hi = g.iter().position(|&v| v > c).expect("inside range");
        let w = (c - g[hi - 1]) / (g[hi] - g[hi - 1]);
        Ok(at(hi - 1) * (1.0 - w) + at(hi) * w)
    }

    /// `(alpha1_left, alpha1_right)` from the nearest `delta_tau` row; values
    /// outside the grid use the closest end row.
    pub fn lookup_alpha1(&self, delta_tau: f64) -> Result<(f64, f64)> {
        self.expect(TableKind::Alpha1Levels)?;
        if self.delta_grid.is_empty() {
            return Err(Error::Table("empty first-stage table".into()));
        }
        let mut best = 0;
        for (i, d) in self.delta_grid.iter().enumerate() {
            if (d - delta_tau).abs() < (self.delta_grid[best] - delta_tau).abs() {
                best = i;
            }
        }
        let (l, r) = (self.values[2 * best], self.values[2 * best + 1]);
        if !(l.is_finite() && r.is_finite()) {
            return Err(Error::Table(format!(
                "first-stage calibration failed for delta_tau = {}",
                self.delta_grid[best]
            )));
        }
        Ok((l, r))
    }

    /// Serializes to the self-describing text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| fmt_sig6(*x)).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "kind={}", self.kind.as_str());
        let _ = writeln!(s, "sim_T={}", self.sim_t);
        let _ = writeln!(s, "replications={}", self.replications);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "c_grid={}", list(&self.c_grid));
        let _ = writeln!(s, "delta_grid={}", list(&self.delta_grid));
        let _ = writeln!(s, "levels={}", list(&self.alpha_grid));
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "data");
        match self.kind {
            TableKind::ZPercentiles => {
                let (nd, na) = (self.delta_grid.len(), self.alpha_grid.len());
                for (ci, c) in self.c_grid.iter().enumerate() {
                    for (di, d) in self.delta_grid.iter().enumerate() {
                        let row = &self.values[(ci * nd + di) * na..(ci * nd + di + 1) * na];
                        let _ = writeln!(s, "{},{},{}", fmt_sig6(*c), fmt_sig6(*d), list(row));
                    }
                }
            }
            TableKind::DfGlsQuantiles => {
                let na = self.alpha_grid.len();
                for (ci, c) in self.c_grid.iter().enumerate() {
                    let _ = writeln!(s, "{},{}", fmt_sig6(*c), list(&self.values[ci * na..(ci + 1) * na]));
                }
            }
            TableKind::Alpha1Levels => {
                for (di, d) in self.delta_grid.iter().enumerate() {
                    let _ = writeln!(s, "{},{}", fmt_sig6(*d), list(&self.values[2 * di..2 * di + 2]));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut lines = text.lines().enumerate();
        for (i, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "data" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(i + 1, format!("expected key=value, got '{line}'")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| {
            header
                .remove(k)
                .ok_or_else(|| perr(0, format!("missing header key '{k}'")))
        };
        let parse_list = |s: &str, line: usize| -> Result<Vec<f64>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| perr(line, format!("'{x}': {e}"))))
                .collect()
        };
        let version: u32 = take("version")?.parse().map_err(|e| perr(0, format!("version: {e}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::Table(format!("unsupported table version {version}")));
        }
        let kind = TableKind::parse(&take("kind")?)?;
        let sim_t = take("sim_T")?.parse().map_err(|e| perr(0, format!("sim_T: {e}")))?;
        let replications = take("replications")?.parse().map_err(|e| perr(0, format!("replications: {e}")))?;
        let seed = take("seed")?.parse().map_err(|e| perr(0, format!("seed: {e}")))?;
        let c_grid = parse_list(&take("c_grid")?, 0)?;
        let delta_grid = parse_list(&take("delta_grid")?, 0)?;
        let alpha_grid = parse_list(&take("levels")?, 0)?;
        let lead = match kind {
            TableKind::ZPercentiles => 2,
            _ => 1,
        };
        let mut values = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = parse_list(line, i + 1)?;
            if row.len() <= lead {
                return Err(perr(i + 1, "row has no values".into()));
            }
            values.extend_from_slice(&row[lead..]);
        }
        let table = Self {
            kind,
            c_grid,
            delta_grid,
            alpha_grid,
            values,
            sim_t,
            replications,
            seed,
            version,
            extra: header,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    /// Writes via a temporary file and a rename, so readers never observe a
    /// truncated table.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Atomic file replacement through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Formats with six significant digits in plain decimal notation.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else { format!("{}", v.abs() * v.signum()) };
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding may carry into a new leading digit, e.g. 9.999995.
    let reparsed: f64 = s.parse().unwrap_or(v);
    let mag2 = reparsed.abs().log10().floor() as i32;
    if mag2 != mag && reparsed != 0.0 {
        let d2 = (5 - mag2).max(0) as usize;
        return format!("{v:.d2$}");
    }
    s
}

/// One path summary for the local-to-unity limit experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitDraw {
    /// `sum x^mu_{t-1} v_t / (sum (x^mu_{t-1})^2)^{1/2}`.
    pub d: f64,
    /// `(sum (x^mu_{t-1})^2)^{1/2} / T`.
    pub s: f64,
    /// Lag-zero DF-GLS statistic of `x_0, ..., x_T`.
    pub t_dfgls: f64,
    /// Independent standard normal.
    pub z: f64,
}

/// Simulates `x_t = (1 + c/T) x_{t-1} + v_t` from `x_0 = 0` and summarizes
/// the path. `buf` is reused to hold the levels.
pub fn simulate_limit_draw<R: Rng>(c: f64, sim_t: usize, rng: &mut R, buf: &mut Vec<f64>, need_dfgls: bool) -> LimitDraw {
    let phi = 1.0 + c / sim_t as f64;
    buf.clear();
    buf.push(0.0);
    let (mut sxv, mut sv, mut sx, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    let mut x = 0.0f64;
    for _ in 0..sim_t {
        let v: f64 = rng.sample(StandardNormal);
        sxv += x * v;
        sv += v;
        sx += x;
        sxx += x * x;
        x = phi * x + v;
        if need_dfgls {
            buf.push(x);
        }
    }
    let n = sim_t as f64;
    let mean = sx / n;
    let num = sxv - mean * sv;
    let den = (sxx - n * mean * mean).max(f64::MIN_POSITIVE);
    let z: f64 = rng.sample(StandardNormal);
    LimitDraw {
        d: num / den.sqrt(),
        s: den.sqrt() / n,
        t_dfgls: if need_dfgls { dfgls_lag0(buf) } else { f64::NAN },
        z,
    }
}

fn check_sim(sim_t: usize, reps: usize) -> Result<()> {
    if sim_t < 2 || reps < 2 {
        return Err(Error::domain("simulation needs sim_T >= 2 and reps >= 2"));
    }
    Ok(())
}

fn z_stat(delta: f64, d: &LimitDraw) -> f64 {
    delta * d.d + (1.0 - delta * delta).sqrt() * d.z
}

fn check_delta(delta: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::domain(format!("|delta| = {} exceeds one", delta.abs())))
    }
}

/// Empirical percentiles of `Z(c, delta) = delta D + (1 - delta^2)^{1/2} Z`.
pub fn simulate_z_percentile(
    c: f64,
    delta: f64,
    alphas: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    check_delta(delta)?;
    check_sim(sim_t, reps)?;
    let draws = exec.map(reps, |r| {
        let mut rng = stream(seed, StreamKind::ZPercentiles, c.to_bits(), 0, r as u64);
        let mut buf = Vec::new();
        simulate_limit_draw(c, sim_t, &mut rng, &mut buf, false)
    });
    let mut stat: Vec<f64> = draws.iter().map(|d| z_stat(delta, d)).collect();
    sort_floats(&mut stat);
    Ok(alphas.iter().map(|&a| quantile_sorted(&stat, a)).collect())
}

/// Full Z-percentile table; the same paths serve every delta at a given c.
pub fn simulate_z_table(
    c_grid: &[f64],
    delta_grid: &[f64],
    levels: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<CriticalValueTable> {
    check_sim(sim_t, reps)?;
    for &d in delta_grid {
        check_delta(d)?;
    }
    let mut values = Vec::with_capacity(c_grid.len() * delta_grid.len() * levels.len());
    for &c in c_grid {
        let draws = exec.map(reps, |r| {
            let mut rng = stream(seed, StreamKind::ZPercentiles, c.to_bits(), 0, r as u64);
            let mut buf = Vec::new();
            simulate_limit_draw(c, sim_t, &mut rng, &mut buf, false)
        });
        for &delta in delta_grid {
            let mut stat: Vec<f64> = draws.iter().map(|d| z_stat(delta, d)).collect();
            sort_floats(&mut stat);
            values.extend(levels.iter().map(|&a| quantile_sorted(&stat, a)));
        }
    }
    let table = CriticalValueTable {
        kind: TableKind::ZPercentiles,
        c_grid: c_grid.to_vec(),
        delta_grid: delta_grid.to_vec(),
        alpha_grid: levels.to_vec(),
        values,
        sim_t,
        replications: reps,
        seed,
        version: FORMAT_VERSION,
        extra: tool_meta(),
    };
    table.validate()?;
    Ok(table)
}

fn tool_meta() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("tool".into(), format!("switchfm {}", env!("CARGO_PKG_VERSION")));
    m
}

/// DF-GLS (lag zero) quantiles on a c grid, made isotonic in c per level.
pub fn simulate_dfgls_quantiles(
    c_grid: &[f64],
    levels: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<CriticalValueTable> {
    check_sim(sim_t, reps)?;
    check_sorted(c_grid, "c")?;
    let na = levels.len();
    let mut raw = Vec::with_capacity(c_grid.len() * na);
    for &c in c_grid {
        let mut stat = exec.map(reps, |r| {
            let mut rng = stream(seed, StreamKind::DfGlsQuantiles, c.to_bits(), 0, r as u64);
            let mut buf = Vec::with_capacity(sim_t + 1);
            simulate_limit_draw(c, sim_t, &mut rng, &mut buf, true).t_dfgls
        });
        sort_floats(&mut stat);
        raw.extend(levels.iter().map(|&a| quantile_sorted(&stat, a)));
    }
    let smoothed = smooth_in_c(&raw, c_grid.len(), na);
    let table = CriticalValueTable {
        kind: TableKind::DfGlsQuantiles,
        c_grid: c_grid.to_vec(),
        delta_grid: Vec::new(),
        alpha_grid: levels.to_vec(),
        values: smoothed,
        sim_t,
        replications: reps,
        seed,
        version: FORMAT_VERSION,
        extra: tool_meta(),
    };
    table.validate()?;
    Ok(table)
}

fn smooth_in_c(raw: &[f64], nc: usize, na: usize) -> Vec<f64> {
    let mut out = raw.to_vec();
    for a in 0..na {
        let col: Vec<f64> = (0..nc).map(|i| raw[i * na + a]).collect();
        for (i, v) in isotonic_increasing(&col).into_iter().enumerate() {
            out[i * na + a] = v;
        }
    }
    out
}

/// Paths of the limit experiment, one vector of draws per c.
#[derive(Debug, Clone)]
pub struct LimitDraws {
    pub c_grid: Vec<f64>,
    pub draws: Vec<Vec<LimitDraw>>,
    pub sim_t: usize,
    pub seed: u64,
}

pub fn simulate_limit_draws(c_grid: &[f64], sim_t: usize, reps: usize, seed: u64, exec: Exec) -> Result<LimitDraws> {
    check_sim(sim_t, reps)?;
    let draws = c_grid
        .iter()
        .map(|&c| {
            exec.map(reps, |r| {
                let mut rng = stream(seed, StreamKind::Calibration, c.to_bits(), 0, r as u64);
                let mut buf = Vec::with_capacity(sim_t + 1);
                simulate_limit_draw(c, sim_t, &mut rng, &mut buf, true)
            })
        })
        .collect();
    Ok(LimitDraws {
        c_grid: c_grid.to_vec(),
        draws,
        sim_t,
        seed,
    })
}

/// Which tail of the switching test is being calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Right,
    Left,
}

/// Critical values used by the limit version of the switching rule.
#[derive(Debug, Clone, Copy)]
struct LimitRule {
    threshold: f64,
    cv_fm: f64,
    cv_t: f64,
}

impl LimitRule {
    fn new(tail: Tail, thresholds: &SwitchThresholds, threshold: f64, z_table: &CriticalValueTable) -> Result<Self> {
        let level = 1.0 - thresholds.alpha2_tilde() / 2.0;
        let cv_fm = normal_quantile(level);
        let cv_t = match tail {
            Tail::Right => z_table.z_percentile(threshold, -1.0, round_level(level))?,
            Tail::Left => cv_fm,
        };
        Ok(Self {
            threshold,
            cv_fm,
            cv_t,
        })
    }
}

fn round_level(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

// Limit switching decision given the interval (cl, cu) and true c.
fn limit_reject(tail: Tail, rule: &LimitRule, delta: f64, c: f64, d: &LimitDraw, cl: f64, cu: f64) -> bool {
    let root = (1.0 - delta * delta).sqrt();
    let t_hac = delta * d.d + root * d.z;
    let k = delta / root;
    let tp = |cs: f64| d.z - k * (c - cs) * d.s;
    let (a, b) = (tp(cl), tp(cu));
    let (fm, t) = match tail {
        Tail::Right => (a.min(b) >= rule.cv_fm, t_hac >= rule.cv_t),
        Tail::Left => (a.max(b) <= -rule.cv_fm, t_hac <= -rule.cv_t),
    };
    if cl > rule.threshold {
        fm
    } else if cu < rule.threshold {
        t
    } else {
        fm && t
    }
}

/// Rejection frequencies of the limit switching test, indexed
/// `[alpha1][c]`, at one delta.
pub fn limit_rejection_surface(
    draws: &LimitDraws,
    delta: f64,
    tail: Tail,
    threshold: f64,
    alphas: &[f64],
    thresholds: &SwitchThresholds,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    let many = limit_rejection_surfaces(draws, &[delta], tail, threshold, alphas, thresholds, dfgls, z_table, exec)?;
    Ok(many.into_iter().next().expect("one delta"))
}

// Surfaces for several deltas, `[delta][alpha1][c]`; intervals are shared.
#[allow(clippy::too_many_arguments)]
fn limit_rejection_surfaces(
    draws: &LimitDraws,
    deltas: &[f64],
    tail: Tail,
    threshold: f64,
    alphas: &[f64],
    thresholds: &SwitchThresholds,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<Vec<Vec<Vec<f64>>>> {
    for &d in deltas {
        if !(d > -1.0 && d <= 1.0) {
            return Err(Error::domain(format!("calibration needs |delta| < 1, got {d}")));
        }
    }
    let rule = LimitRule::new(tail, thresholds, threshold, z_table)?;
    let curves: Vec<(Vec<f64>, Vec<f64>)> = alphas
        .iter()
        .map(|&a| Ok((dfgls.dfgls_curve(round_level(a / 2.0))?, dfgls.dfgls_curve(round_level(1.0 - a / 2.0))?)))
        .collect::<Result<_>>()?;
    let cg: Vec<f64> = dfgls.c_grid.clone();
    let per_alpha = exec.map(alphas.len(), |ai| {
        let (lo, hi) = &curves[ai];
        let mut out = vec![vec![0.0; draws.c_grid.len()]; deltas.len()];
        for (ci, (&c, reps)) in draws.c_grid.iter().zip(&draws.draws).enumerate() {
            let mut counts = vec![0usize; deltas.len()];
            for d in reps {
                let ci_c = invert_curves(d.t_dfgls, &cg, lo, hi);
                for (di, &delta) in deltas.iter().enumerate() {
                    if limit_reject(tail, &rule, delta, c, d, ci_c.0, ci_c.1) {
                        counts[di] += 1;
                    }
                }
            }
            for di in 0..deltas.len() {
                out[di][ci] = counts[di] as f64 / reps.len() as f64;
            }
        }
        out
    });
    Ok((0..deltas.len())
        .map(|di| per_alpha.iter().map(|pa| pa[di].clone()).collect())
        .collect())
}

/// Admissible simulated rejection rate for a nominal `target`: two binomial
/// standard errors above it, so that a rate equal to the target in
/// population (as when delta is near zero) is not rejected by noise across
/// the c grid.
pub fn calibration_bound(target: f64, reps: usize) -> f64 {
    target + 2.0 * (target * (1.0 - target) / reps as f64).sqrt()
}

/// Largest level whose worst-case rejection over the c grid stays at or
/// below `bound`; `None` when no level qualifies.
pub fn select_alpha1(surface: &[Vec<f64>], alphas: &[f64], bound: f64) -> Option<(f64, f64)> {
    let mut best = None;
    for (a, row) in alphas.iter().zip(surface) {
        let worst = row.iter().copied().fold(0.0, f64::max);
        if worst <= bound + 1e-12 {
            best = Some((*a, worst));
        }
    }
    best
}

/// Outcome of the first-stage calibration.
#[derive(Debug, Clone)]
pub struct Alpha1Calibration {
    pub table: CriticalValueTable,
    /// Calibration failures as `(delta_tau, tail)`.
    pub failures: Vec<(f64, Tail)>,
}

/// Calibrates `(alpha1_left, alpha1_right)` for each `delta_tau` so that the
/// limit switching test at level `alpha2 - epsilon` rejects at most half
/// that level for every c in the calibration region.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_alpha1(
    delta_grid: &[f64],
    thresholds: &SwitchThresholds,
    qc_grid: &[f64],
    sim_t: usize,
    reps: usize,
    seed: u64,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<Alpha1Calibration> {
    check_sorted(delta_grid, "delta")?;
    let draws = simulate_limit_draws(qc_grid, sim_t, reps, seed, exec)?;
    calibrate_alpha1_from_draws(delta_grid, thresholds, &draws, reps, dfgls, z_table, exec)
}

pub fn calibrate_alpha1_from_draws(
    delta_grid: &[f64],
    thresholds: &SwitchThresholds,
    draws: &LimitDraws,
    reps: usize,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<Alpha1Calibration> {
    let alphas = alpha1_grid();
    let bound = calibration_bound(thresholds.alpha2_tilde() / 2.0, reps);
    let mut values = vec![f64::NAN; delta_grid.len() * 2];
    let mut failures = Vec::new();
    let mut worst_notes = Vec::new();
    for (slot, tail, thr) in [(0, Tail::Left, thresholds.c_under_l), (1, Tail::Right, thresholds.c_bar_l)] {
        let surfaces = limit_rejection_surfaces(draws, delta_grid, tail, thr, &alphas, thresholds, dfgls, z_table, exec)?;
        for (di, surface) in surfaces.iter().enumerate() {
            match select_alpha1(surface, &alphas, bound) {
                Some((a, worst)) => {
                    values[2 * di + slot] = a;
                    worst_notes.push(fmt_sig6(worst));
                }
                None => {
                    failures.push((delta_grid[di], tail));
                    worst_notes.push("nan".into());
                }
            }
        }
    }
    let mut extra = tool_meta();
    extra.insert("columns".into(), "delta_tau,alpha1_left,alpha1_right".into());
    extra.insert("c_bar_L".into(), fmt_sig6(thresholds.c_bar_l));
    extra.insert("c_under_L".into(), fmt_sig6(thresholds.c_under_l));
    extra.insert("alpha2".into(), fmt_sig6(thresholds.alpha2));
    extra.insert("epsilon".into(), fmt_sig6(thresholds.epsilon));
    extra.insert(
        "q_c".into(),
        draws.c_grid.iter().map(|c| fmt_sig6(*c)).collect::<Vec<_>>().join(";"),
    );
    extra.insert("z_table".into(), z_table.id());
    extra.insert("dfgls_table".into(), dfgls.id());
    extra.insert("source".into(), "generated".into());
    let table = CriticalValueTable {
        kind: TableKind::Alpha1Levels,
        c_grid: Vec::new(),
        delta_grid: delta_grid.to_vec(),
        alpha_grid: Vec::new(),
        values,
        sim_t: draws.sim_t,
        replications: reps,
        seed: draws.seed,
        version: FORMAT_VERSION,
        extra,
    };
    table.validate()?;
    Ok(Alpha1Calibration { table, failures })
}

/// The published first-stage levels as a table.
pub fn paper_alpha1_table() -> CriticalValueTable {
    let mut extra = BTreeMap::new();
    extra.insert("columns".into(), "delta_tau,alpha1_left,alpha1_right".into());
    extra.insert("source".into(), "published".into());
    CriticalValueTable {
        kind: TableKind::Alpha1Levels,
        c_grid: Vec::new(),
        delta_grid: PAPER_ALPHA1.iter().map(|r| r.0).collect(),
        alpha_grid: Vec::new(),
        values: PAPER_ALPHA1.iter().flat_map(|r| [r.1, r.2]).collect(),
        sim_t: 5000,
        replications: 10_000,
        seed: 0,
        version: FORMAT_VERSION,
        extra,
    }
}

/// Result of the threshold search for one tail.
#[derive(Debug, Clone)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub mean_under_rejection: f64,
    /// `(candidate, mean under-rejection)` for every candidate tried.
    pub scores: Vec<(f64, f64)>,
}

/// Chooses the switching threshold minimizing the average under-rejection
/// `alpha2/2 - rejection` over an evaluation grid of c and delta, with the
/// first-stage level recalibrated on the calibration region for each
/// candidate.
#[allow(clippy::too_many_arguments)]
pub fn select_threshold(
    tail: Tail,
    candidates: &[f64],
    deltas: &[f64],
    calibration_draws: &LimitDraws,
    evaluation_draws: &LimitDraws,
    thresholds: &SwitchThresholds,
    dfgls: &CriticalValueTable,
    z_table: &CriticalValueTable,
    exec: Exec,
) -> Result<ThresholdChoice> {
    let alphas = alpha1_grid();
    let reps = calibration_draws.draws.first().map_or(0, Vec::len).max(1);
    let bound = calibration_bound(thresholds.alpha2_tilde() / 2.0, reps);
    let mut scores = Vec::new();
    for &cand in candidates {
        let cal = limit_rejection_surfaces(calibration_draws, deltas, tail, cand, &alphas, thresholds, dfgls, z_table, exec)?;
        let mut total = 0.0;
        let mut count = 0usize;
        let mut ok = true;
        for (di, &delta) in deltas.iter().enumerate() {
            let Some((a1, _)) = select_alpha1(&cal[di], &alphas, bound) else {
                ok = false;
                break;
            };
            let ev = limit_rejection_surface(evaluation_draws, delta, tail, cand, &[a1], thresholds, dfgls, z_table, exec)?;
            for r in &ev[0] {
                total += thresholds.alpha2 / 2.0 - r;
                count += 1;
            }
        }
        let score = if ok { total / count as f64 } else { f64::INFINITY };
        scores.push((cand, score));
    }
    let (threshold, mean_under_rejection) = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Calibration("no threshold candidates".into()))?;
    if !mean_under_rejection.is_finite() {
        return Err(Error::Calibration("no candidate admits a valid first-stage level".into()));
    }
    Ok(ThresholdChoice {
        threshold,
        mean_under_rejection,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_documented_shape() {
        assert_eq!(standard_levels().len(), 199);
        assert_eq!(dfgls_c_grid().len(), 52);
        assert_eq!(*dfgls_c_grid().first().unwrap(), -250.0);
        assert_eq!(*dfgls_c_grid().last().unwrap(), 4.0);
        assert_eq!(z_c_grid().len(), 18);
        assert!(z_c_grid().windows(2).all(|w| w[0] < w[1]));
        assert!(calibration_c_grid().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(alpha1_grid().len(), 98);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(2.8623449), "2.86234");
        assert_eq!(fmt_sig6(-250.0), "-250.000");
        assert_eq!(fmt_sig6(0.005), "0.00500000");
        assert_eq!(fmt_sig6(9.9999996), "10.0000");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(-1.0e-7), "-0.000000100000");
    }

    #[test]
    fn alpha1_lookup_rules() {
        let t = paper_alpha1_table();
        assert_eq!(t.lookup_alpha1(-0.646).unwrap(), (0.19, 0.58));
        assert_eq!(t.lookup_alpha1(0.2).unwrap(), (0.79, 0.98));
        assert_eq!(t.lookup_alpha1(-0.797).unwrap(), (0.14, 0.43));
        assert_eq!(t.lookup_alpha1(-0.99).unwrap(), (0.14, 0.43));
        assert_eq!(t.lookup_alpha1(-0.399).unwrap(), (0.26, 0.75));
    }

    #[test]
    fn text_round_trip() {
        let t = simulate_dfgls_quantiles(&[-20.0, -10.0, 0.0], &[0.05, 0.5, 0.95], 100, 500, 3, Exec::Sequential).unwrap();
        let text = t.to_text();
        let back = CriticalValueTable::from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.kind, TableKind::DfGlsQuantiles);
        for (a, b) in back.values.iter().zip(&t.values) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3));
        }
        let p = paper_alpha1_table();
        let p2 = CriticalValueTable::from_text(&p.to_text(), Path::new("mem")).unwrap();
        assert_eq!(p2.values, p.values);
    }

    #[test]
    fn reading_rejects_bad_input() {
        let bad = "version=1\nkind=nonsense\n";
        assert!(CriticalValueTable::from_text(bad, Path::new("x")).is_err());
        let t = paper_alpha1_table().to_text().replace("0.430000", "oops");
        assert!(matches!(
            CriticalValueTable::from_text(&t, Path::new("x")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn dfgls_rows_are_isotonic() {
        let t = simulate_dfgls_quantiles(&[-30.0, -20.0, -10.0, -5.0, 0.0], &[0.1, 0.5, 0.9], 200, 400, 5, Exec::Sequential)
            .unwrap();
        for lvl in [0.1, 0.5, 0.9] {
            let curve = t.dfgls_curve(lvl).unwrap();
            assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn z_table_delta_zero_is_normal() {
        let levels = [0.05, 0.5, 0.95];
        let t = simulate_z_table(&[-10.0, 0.0], &[-1.0, 0.0], &levels, 200, 20_000, 1, Exec::default()).unwrap();
        for c in [-10.0, 0.0] {
            let q = t.z_percentile(c, 0.0, 0.95).unwrap();
            // Standard error of the 95th percentile: sqrt(p(1-p)/n)/phi(q).
            let se = (0.95f64 * 0.05 / 20_000.0).sqrt() / crate::stats::normal_pdf(1.645);
            assert!((q - 1.644_854).abs() < 3.0 * se, "{q}");
        }
        let mid = t.z_percentile(-5.0, -1.0, 0.95).unwrap();
        let (a, b) = (t.z_percentile(-10.0, -1.0, 0.95).unwrap(), t.z_percentile(0.0, -1.0, 0.95).unwrap());
        assert!((mid - 0.5 * (a + b)).abs() < 1e-12);
        assert!(t.z_percentile(5.0, -1.0, 0.95).is_err());
        assert!(t.z_percentile(0.0, -0.5, 0.95).is_err());
    }

    #[test]
    fn invalid_delta_rejected() {
        assert!(simulate_z_percentile(0.0, -1.5, &[0.5], 100, 100, 1, Exec::Sequential).is_err());
    }

    #[test]
    fn thresholds_validate() {
        assert!(SwitchThresholds::new(10.0, -100.0, 0.1, 0.04).is_err());
        let t = SwitchThresholds::default();
        assert!((t.alpha2_tilde() - 0.06).abs() < 1e-15);
    }
}
