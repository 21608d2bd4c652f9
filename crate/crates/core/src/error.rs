use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("operator is not self-adjoint (relative asymmetry {0:e})")]
    NotSelfAdjoint(f64),

    #[error("dimension {dim} exceeds the dense eigensolver cap of {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("numeric error at {location}: {detail}")]
    Numeric { location: String, detail: String },

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            detail: detail.into(),
        }
    }
}
