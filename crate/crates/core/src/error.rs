use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by the waveguide solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LapError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x1}, {x2}) lies outside the unit cell")]
    OutOfDomain { x1: f64, x2: f64 },

    #[error("z = {z} is too close to a Floquet multiplier (indicator {indicator:.3e})")]
    NearPole { z: Complex64, indicator: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("contour construction failed: {0}")]
    ContourConstruction(String),

    #[error("source recovery failed: {0}")]
    RecoveryFailure(String),

    #[error("quadrature callback failed at node {node}: {source}")]
    Callback {
        node: usize,
        #[source]
        source: Box<LapError>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LapError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LapError {
    LapError::InvalidParameter(msg.into())
}
