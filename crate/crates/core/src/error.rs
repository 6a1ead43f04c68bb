use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation, inference and simulation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("sample too small: need at least {required} observations, got {actual}")]
    SampleTooSmall { required: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at position {index} in series '{label}'")]
    NonFinite { label: String, index: usize },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        best: Vec<f64>,
    },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("prewhitening failed: {0}")]
    Prewhitening(String),

    #[error("singular sandwich matrix: {0}")]
    Sandwich(String),

    #[error("table error: {0}")]
    Table(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path:?} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
