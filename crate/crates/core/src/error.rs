//! Library error type.

use thiserror::Error;

/// Everything that can go wrong while building or evaluating a model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("value {y} lies outside the branch range [{lo}, {hi}]")]
    OutOfRange { y: f64, lo: f64, hi: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("orbit did not reach Y within {cap} iterations")]
    NotFound { cap: usize },

    #[error("power iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unknown cell: {0}")]
    UnknownCell(String),

    #[error("depth {requested} exceeds the enumerated depth {available}")]
    DepthExceeded { requested: usize, available: usize },

    #[error("truncation leakage {leak:e} exceeds the tolerance {tolerance:e}; increase the trap depth")]
    Leakage { leak: f64, tolerance: f64 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("point {0} is not adjacent to Y")]
    NotAdjacent(f64),

    #[error("observable is not centred: normalized partial sum {ratio:e} exceeds {tolerance:e}")]
    NotCentred { ratio: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }
}
