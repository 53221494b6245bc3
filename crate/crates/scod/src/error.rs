//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by library operations.
#[derive(Debug, Error)]
pub enum ScodError {
    /// An argument violated a precondition (shape mismatch, bad range, non-finite value).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two sketch accumulators built with different operators cannot be merged.
    #[error("incompatible sketch: {0}")]
    IncompatibleSketch(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Serialized artifacts do not fit together (e.g. monitor vs. model dimensions).
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// Malformed artifact bytes.
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ScodError>;

pub(crate) fn invalid(msg: impl Into<String>) -> ScodError {
    ScodError::InvalidArgument(msg.into())
}
