//! Empirical run configuration: a TOML file whose values can be overridden
//! from the command line. The Goyal–Welch column names live in their own
//! section because data vintages rename them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use switchfm::harness::deciles;
use switchfm::tables::Alpha1Source;

/// Which predictor to build from the raw columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predictor {
    /// `log(D12) - log(Index)`.
    DividendPrice,
    /// `log(E12) - log(Index)`.
    EarningsPrice,
    /// Book-to-market level.
    BookToMarket,
    /// Any column, used untransformed.
    Custom(String),
}

impl Predictor {
    /// `dp`, `ep`, `bm`, or the name of a column.
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        let s = s.trim();
        Ok(match s {
            "" => bail!("empty predictor name"),
            "dp" => Self::DividendPrice,
            "ep" => Self::EarningsPrice,
            "bm" => Self::BookToMarket,
            other => Self::Custom(other.strip_prefix("custom:").unwrap_or(other).to_string()),
        })
    }

    pub fn label(&self) -> &str {
        match self {
            Self::DividendPrice => "dp",
            Self::EarningsPrice => "ep",
            Self::BookToMarket => "bm",
            Self::Custom(c) => c,
        }
    }
}

/// Column names of the input file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub date: String,
    pub price: String,
    pub dividends: String,
    pub earnings: String,
    pub book_to_market: String,
    pub riskfree: String,
    pub market_return: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "yyyymm".into(),
            price: "Index".into(),
            dividends: "D12".into(),
            earnings: "E12".into(),
            book_to_market: "b/m".into(),
            riskfree: "Rfree".into(),
            market_return: "CRSP_SPvw".into(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    input: Option<PathBuf>,
    start: Option<i64>,
    end: Option<i64>,
    predictor: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TestSection {
    taus: Option<Vec<f64>>,
    alpha2: Option<f64>,
    tables_dir: Option<PathBuf>,
    alpha1_source: Option<String>,
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: DataSection,
    columns: ColumnMap,
    test: TestSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConfig {
    pub input_path: PathBuf,
    /// Inclusive `yyyymm` bounds.
    pub date_span: (Option<i64>, Option<i64>),
    pub predictor: Predictor,
    pub columns: ColumnMap,
    pub taus: Vec<f64>,
    pub alpha2: f64,
    pub tables_dir: PathBuf,
    pub alpha1_source: Alpha1Source,
    pub output_path: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub predictor: Option<String>,
    pub taus: Option<Vec<f64>>,
    pub alpha2: Option<f64>,
    pub tables_dir: Option<PathBuf>,
    pub alpha1_source: Option<String>,
    pub start: Option<i64>,
    pub end: Option<i64>,
    pub output: Option<PathBuf>,
}

pub fn parse_tau_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad quantile level '{t}'")))
        .collect()
}

impl EmpiricalConfig {
    pub fn load(path: Option<&Path>, ov: Overrides) -> anyhow::Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let input_path = ov
            .input
            .or(file.data.input)
            .context("no input file given (--input or [data].input)")?;
        let predictor = Predictor::parse(ov.predictor.or(file.data.predictor).as_deref().unwrap_or("dp"))?;
        let alpha1_source = Alpha1Source::parse(
            ov.alpha1_source
                .or(file.test.alpha1_source)
                .as_deref()
                .unwrap_or("paper"),
        )?;
        let cfg = Self {
            input_path,
            date_span: (ov.start.or(file.data.start), ov.end.or(file.data.end)),
            predictor,
            columns: file.columns,
            taus: ov.taus.or(file.test.taus).unwrap_or_else(deciles),
            alpha2: ov.alpha2.or(file.test.alpha2).unwrap_or(0.1),
            tables_dir: ov
                .tables_dir
                .or(file.test.tables_dir)
                .unwrap_or_else(|| PathBuf::from("tables")),
            alpha1_source,
            output_path: ov.output.or(file.test.output),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.taus.is_empty() {
            bail!("empty quantile list");
        }
        if self.taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            bail!("quantile levels must lie in (0, 1): {:?}", self.taus);
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            bail!("quantile levels must be strictly increasing: {:?}", self.taus);
        }
        if !(self.alpha2 > 0.0 && self.alpha2 < 1.0) {
            bail!("alpha2 = {} outside (0, 1)", self.alpha2);
        }
        if let (Some(a), Some(b)) = self.date_span {
            if a > b {
                bail!("date span start {a} is after end {b}");
            }
        }
        Ok(())
    }
}
