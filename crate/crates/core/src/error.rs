use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DdrError>;

#[derive(Debug, Error)]
pub enum DdrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("value {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DdrError {
    pub fn dim(msg: impl Into<String>) -> Self {
        DdrError::Dimension(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        DdrError::Numeric(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        DdrError::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DdrError::Io {
            path: path.into(),
            source,
        }
    }
}
