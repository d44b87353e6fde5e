use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (left {left:?}, right {right:?})")]
    DimensionMismatch {
        what: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("assignment matrix is not binary")]
    NotBinary,

    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("linear program hit the iteration limit after {0} pivots")]
    IterationLimit(usize),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
