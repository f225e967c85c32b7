//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not positive semi-definite")]
    NotPositiveSemiDefinite,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quadratic program enumeration found no feasible active set")]
    InfeasibleEnumeration,

    #[error("degenerate tail: top order statistics are all equal")]
    DegenerateTail,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("outside the regime where the method applies: {0}")]
    Regime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("no data rows found")]
    EmptyData,
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}
