//! Error type shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step index {index} out of range for a schedule with {steps} steps")]
    IndexOutOfRange { index: usize, steps: usize },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("quadrature grid too coarse: doubling the resolution moved the estimate by {delta:e}")]
    GridTooCoarse { delta: f64 },

    #[error("model is not conjugate: {0}")]
    NotConjugate(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
