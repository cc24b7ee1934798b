use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported generator `{0}`")]
    UnsupportedGenerator(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    /// No candidate cleared the threshold within the attempt budget.
    #[error("no candidate exceeded the entropy threshold after {attempts} attempts")]
    Exhausted { attempts: usize, entropies: Vec<f64> },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }
}
