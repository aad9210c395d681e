//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("spectrum must be positive and non-increasing: {0}")]
    BadSpectrum(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("prediction invalid: {0}")]
    InvalidPrediction(String),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
