use thiserror::Error;

use crate::schur::SchurForm;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite element at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{op} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Francis iteration ran out of sweeps. `active` is the size of the
    /// still-unreduced leading window; `partial` holds the factors reached so far.
    #[error("Schur iteration did not converge, {active} rows still active")]
    SchurNoConvergence {
        active: usize,
        partial: Box<SchurForm>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is numerically singular (offending value {value:e})")]
    Singular { value: f64 },

    #[error("value outside the metric's domain: {0}")]
    Domain(String),

    #[error("inconsistent block structure: {0}")]
    Structure(String),

    #[error("non-finite loss at epoch {epoch} (method {method}, msvr {msvr:e})")]
    NonFiniteLoss {
        epoch: usize,
        method: String,
        msvr: f64,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
