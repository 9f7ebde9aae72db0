//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible (matrix products, vector lengths, ...).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A pivot fell below the singularity tolerance during elimination.
    #[error("singular matrix: pivot {pivot:e} below tolerance at column {col}")]
    SingularMatrix { col: usize, pivot: f64 },

    /// Normalization of an (effectively) zero vector or matrix.
    #[error("cannot normalize object with zero l2 norm")]
    ZeroNorm,

    /// The morphing scale factor must divide the unrolled data length.
    #[error("kappa {kappa} does not divide alpha*m^2 = {total}")]
    NonDivisible { kappa: usize, total: usize },

    /// Rejection sampling gave up.
    #[error("retry budget exhausted after {0} attempts")]
    RetryExhausted(usize),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    DomainError(String),

    /// Tensor / kernel / matrix geometry that cannot describe a convolution.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// The stacked pair matrix is numerically singular.
    #[error("rank-deficient pair stack")]
    RankDeficient,

    /// Not enough known pairs to determine the core matrix.
    #[error("insufficient pairs: need {needed}, got {got}")]
    InsufficientPairs { needed: usize, got: usize },

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed file contents (bad magic, truncated payload, ...).
    #[error("invalid file format: {0}")]
    InvalidFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
