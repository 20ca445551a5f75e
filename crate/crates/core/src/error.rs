use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("total conflict between opinions (conflict mass {conflict})")]
    TotalConflict { conflict: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("calibration: class {class} has only {count} samples (need at least {min})")]
    Calibration {
        class: usize,
        count: usize,
        min: usize,
    },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("format: {0}")]
    Format(String),

    #[error("unsupported format version {found} in {what} (this build reads version {supported})")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
