//! Error types shared across the toolkit.

use thiserror::Error;

/// Unified error type for all georay operations.
#[derive(Debug, Error)]
pub enum GeorayError {
    /// Evaluation requested outside a model's validity region.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or precondition check failed before any compute.
    #[error("validation error: {0}")]
    Validation(String),

    /// Adapted-chart construction failed (fold-over, degenerate Jacobian, ...).
    #[error("chart error: {0}")]
    Chart(String),

    /// ODE integration failed its conservation checks.
    #[error("integration error: {0}")]
    Integration(String),

    /// A quadrature or transform did not reach its accuracy target.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// An exponential weight overflowed at an included grid cell.
    #[error("weight overflow at x = {x}: {message}")]
    WeightOverflow { x: f64, message: String },

    /// Dense assembly refused: too many included cells.
    #[error("size cap exceeded: {included} included cells > {cap}; coarsen by >= {factor:.2}x")]
    SizeCap {
        included: usize,
        cap: usize,
        factor: f64,
    },

    /// A discrete norm degenerated (no included cells).
    #[error("degenerate norm: {0}")]
    DegenerateNorm(String),

    /// Iterative solve did not converge within the budget.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// I/O or file-format problem.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeorayError {
    fn from(e: std::io::Error) -> Self {
        GeorayError::Io(e.to_string())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, GeorayError>;
