use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Caller supplied data or configuration that violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// A tridiagonal or dense factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {index} is {value}")]
    NotPositiveDefinite { index: usize, value: f64 },
    /// Numerical breakdown that indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_))
    }
}
