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

    #[error("invalid format: {0}")]
    Format(String),

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("row {row} has near-zero norm ({norm:e}); cosine is undefined")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all fusion weights are zero for row {row}")]
    DegenerateWeights { row: usize },

    #[error("no eligible samples to evaluate: {0}")]
    EmptyEvaluation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 2 for data/validation problems, 3 for I/O.
    /// Usage errors (status 1) are raised by the argument parser before any of these.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
