//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor or batch shapes do not line up.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A scenario asks for more samples than the dataset provides.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A metric is undefined on the given input (e.g. single-class AUROC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// CSV or archive contents failed to parse.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Dataset bytes are present but not what they claim to be.
    #[error("corrupt data in {path}: {message}")]
    CorruptData { path: PathBuf, message: String },

    /// Checkpoint archive is truncated, mismatched or otherwise unusable.
    #[error("corrupt checkpoint at {path}: {message}")]
    CorruptCheckpoint { path: PathBuf, message: String },

    /// Training produced a non-finite objective.
    #[error("non-finite loss at step {step}: {message}")]
    NonFiniteLoss { step: u64, message: String },

    /// A brute-force search was asked for more work than it will do.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
