use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoxianError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxianError {
    #[error("invalid parameters at index {index}: {reason}")]
    InvalidParams { index: usize, reason: String },

    #[error("invalid generator at row {index}: {reason}")]
    InvalidGenerator { index: usize, reason: String },

    #[error("dimension mismatch: expected order {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular bidiagonal system: |diag[{index}]| below 1e-300")]
    Singular { index: usize },

    #[error("overflow while computing moment of order {order}")]
    Overflow { order: u32 },

    #[error("invalid data at observation {index}: {reason}")]
    InvalidData { index: usize, reason: String },

    #[error("order {n} exceeds the configured cap of {cap} phases")]
    OrderTooLarge { n: usize, cap: usize },

    #[error("invalid option: {0}")]
    InvalidOption(String),
}
