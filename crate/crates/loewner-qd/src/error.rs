//! Crate-wide error type.
//!
//! Numerical routines return structured errors so callers (and the CLI exit
//! codes) can tell input mistakes from genuine numerical breakdown.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation requested exactly at a factor with negative exponent.
    #[error("pole hit: evaluation at factor location {0}")]
    PoleHit(Complex64),

    /// A prefactor of zero (or other degenerate input) makes the differential vanish.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed domain data (bad exponent string, vertex outside the half-plane, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Newton iteration failed to reach tolerance.
    #[error("no convergence inverting map at target {target} (last iterate {last}, residual {residual:.3e})")]
    NoConvergence {
        target: Complex64,
        last: Complex64,
        residual: f64,
    },

    /// Requested departure direction does not exist at the launch point.
    #[error("invalid direction index {index}: {count} admissible departure directions")]
    BadDirection { index: usize, count: usize },

    /// Startup slit could not be made consistent even after shrinking.
    #[error("startup too coarse: defect {defect:.3e} above tolerance {tol:.3e} at minimum startup size")]
    StartupTooCoarse { defect: f64, tol: f64 },

    /// A Taylor step was requested beyond the collision horizon.
    #[error("step too large: h={h:.3e} exceeds horizon {horizon:.3e} (gap {gap:.3e})")]
    StepTooLarge { h: f64, horizon: f64, gap: f64 },

    /// The driving point ran into a marked point.
    #[error("singular configuration: mark at {mark} within {dist:.3e} of the driving point")]
    Collision { mark: Complex64, dist: f64 },

    /// A corner landed on a zero or pole of the ambient differential.
    #[error("corner at singularity of the differential: {0}")]
    CornerAtSingularity(Complex64),

    /// A quantity that must be real developed a large imaginary part.
    #[error("symmetry loss: |imaginary part| {0:.3e} of a real quantity exceeds tolerance")]
    SymmetryLoss(f64),

    /// The running constraint drifted past its tolerance.
    #[error("constraint residual {residual:.3e} exceeds tolerance {tol:.3e} at t={t}")]
    ConstraintDrift { residual: f64, tol: f64, t: f64 },

    /// Path fails the simple-curve requirements.
    #[error("path error: {0}")]
    BadPath(String),

    /// Two traces share no time interval.
    #[error("no overlapping time range between traces")]
    NoOverlap,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
