//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by constructors and operations with checked preconditions.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A covariance or scale matrix failed the symmetric positive-definite
    /// check (Cholesky factorization did not succeed).
    #[error("matrix is not symmetric positive-definite: {0}")]
    NotPositiveDefinite(String),

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: String,
    },

    /// Two sequences that must have equal length do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
