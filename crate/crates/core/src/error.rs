//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at iteration {iteration}: loss is not finite")]
    TrainingDiverged { iteration: usize },

    #[error("interpreter failed: {0}")]
    Interpreter(String),

    #[error("architecture '{arch}' does not support {what}")]
    UnsupportedArchitecture { arch: String, what: String },

    #[error("oracle query failed at index {index}: {reason}")]
    OracleFailure { index: usize, reason: String },

    #[error("file format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
