use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate weights: {0}")]
    Weights(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("enumeration too large: {0}")]
    Enumeration(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("predictor error: {0}")]
    Predictor(String),

    #[error(transparent)]
    Bridge(#[from] crate::learners::bridge::BridgeError),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
