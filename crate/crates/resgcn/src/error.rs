//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {0}x{1} and {2}x{3}", lhs.0, lhs.1, rhs.0, rhs.1)]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: need {needed} nodes but only {available} available")]
    Capacity { needed: usize, available: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class: 1 for usage/config problems, 2 for
    /// runtime/numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::InvalidArgument(_)
            | Error::Capacity { .. }
            | Error::Config(_)
            | Error::Io { .. } => 1,
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::Training(_)
            | Error::State(_)
            | Error::UndefinedMetric(_)
            | Error::Json(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
