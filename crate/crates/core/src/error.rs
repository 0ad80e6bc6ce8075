use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value or combination of values violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A vector or matrix has the wrong size for the operation.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The spectrum has no usable nonzero eigenvalue.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    /// A step size lies at or beyond the convergence boundary.
    #[error("step size {eta} is outside the convergent range (0, {limit})")]
    StepSizeOutOfRange { eta: f64, limit: f64 },

    /// A per-iteration factor >= 1 cannot reach any target below the start.
    #[error("non-convergent rate g = {0}")]
    NonConvergentRate(f64),

    /// Exhaustive enumeration would visit more states than allowed.
    #[error("enumeration budget exceeded: {required:.3e} states > {budget:.3e} allowed")]
    BudgetExceeded { required: f64, budget: f64 },

    /// An operation received an empty collection it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A dataset cell failed to parse; locations are 1-based data rows.
    #[error("parse error at {path}, row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
