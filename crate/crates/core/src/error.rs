use thiserror::Error;

/// Errors raised by the lattice, operator, spectral and statistics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmlError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state width mismatch: expected half-width {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("tail values disagree: {left} vs {right}")]
    TailMismatch { left: f64, right: f64 },

    #[error("value {value} at node {node} lies outside [0, 1)")]
    OutOfRange { node: i64, value: f64 },

    #[error("coupling is not invertible: {0}")]
    NotInvertible(String),

    #[error("cell budget exceeded: k={k}, N={bins} needs {required} cells, cap is {cap}")]
    BudgetExceeded { k: usize, bins: usize, required: u128, cap: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("map is not injective on the set: {0}")]
    NotInjective(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CmlError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CmlError {
    CmlError::InvalidParameter { name, reason: reason.into() }
}
