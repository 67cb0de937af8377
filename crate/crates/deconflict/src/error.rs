//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two aircraft are closer than the separation norm at time zero.
    /// Every model and assessment assumes initial separation.
    #[error("aircraft {i} and {j} start {dist:.3} NM apart, below the separation norm {d} NM")]
    InitialLoss { i: usize, j: usize, dist: f64, d: f64 },

    #[error("aircraft index {index} out of range for instance with {len} aircraft")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid control bounds: {0}")]
    InvalidControl(String),

    #[error("invalid uncertainty: {0}")]
    InvalidUncertainty(String),

    #[error("robustness budget {0} outside [0, 4]")]
    InvalidGamma(f64),

    /// Control recovery needs delta_x > 0; the heading cone guarantees it
    /// for any feasible point, so this flags solver failures.
    #[error("cannot recover speed and heading from delta with delta_x = {0}")]
    DegenerateDelta(f64),

    #[error("could not place aircraft {aircraft} after {attempts} draws without losing separation")]
    GenerationExhausted { aircraft: usize, attempts: u64 },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("solver shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical failure in QP subproblem: {0}")]
    NumericalFailure(String),

    #[error("grid search exceeded evaluation budget ({evaluated} > {budget})")]
    ResourceCap { evaluated: u64, budget: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
