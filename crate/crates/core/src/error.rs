use thiserror::Error;

use crate::algebra::ValidationReport;

/// Errors raised across the crate.
///
/// Structural problems (bad indices, wrong dimensions) are kept apart from
/// identity violations so callers can tell malformed input from a well-formed
/// algebra that simply fails the Lie axioms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("algebra validation failed: {0}")]
    Validation(ValidationReport),

    #[error("degree cap exceeded: step {step} > {cap}")]
    DegreeCap { step: usize, cap: usize },

    #[error("calibration failed after {rounds} rounds; worst relative defect {defect:e}")]
    Calibration {
        rounds: usize,
        defect: f64,
        witness: (Vec<f64>, Vec<f64>),
    },

    #[error("divergent difference quotients: {0}")]
    Divergent(String),

    #[error("insufficient sampler density: {0}")]
    InsufficientDensity(String),

    #[error("budget too small: {0}")]
    Budget(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
