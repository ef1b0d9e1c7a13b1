use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QpadError>;

#[derive(Debug, Error)]
pub enum QpadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("naive engine refused: {n} training points exceeds cap {cap}; pass --force-naive to override")]
    NaiveCapExceeded { n: usize, cap: usize },

    #[error("model file: {0}")]
    Model(String),
}

impl QpadError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QpadError::Io { path: path.into(), source }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        QpadError::InvalidArgument(msg.into())
    }
}
