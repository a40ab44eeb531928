//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DosnetError>;

#[derive(Debug, Error)]
pub enum DosnetError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dtype mismatch: {0}")]
    DtypeMismatch(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training aborted: NaN loss at epoch {epoch}, batch {batch} (max |param| = {max_param:.3e})")]
    NanLoss {
        epoch: usize,
        batch: usize,
        max_param: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DosnetError {
    pub fn dim(msg: impl Into<String>) -> Self {
        DosnetError::DimensionMismatch(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        DosnetError::InvalidArgument(msg.into())
    }
}
