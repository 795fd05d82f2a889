//! Run configuration shared by the tracing pipelines.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which right-hand side the disc tracer integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialMode {
    /// Treat the origin power as a marked point contribution (default; the
    /// constant term comes from the residue computation and passes the
    /// radius-slit check).
    OriginMark,
    /// The formula with a bare `+2` constant and no origin contribution.
    /// Kept selectable for instrumentation; it generally produces a
    /// non-real angular velocity and the realness guard stops the trace.
    AsPrinted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base time step.
    pub h: f64,
    /// Taylor order M (1 = Euler), 1..=8.
    pub order: usize,
    /// Startup capacity: each arc begins from an explicit slit of this
    /// capacity-time. Keep it small — the driving value moves like √t across
    /// the startup window, so a window of capacity s leaves an unsampled
    /// driving excursion of order √s at every arc start.
    pub startup: f64,
    /// Step ramp window after each arc start: steps grow linearly with time
    /// since the arc began until they reach `h` at `ramp`. The square-root
    /// behaviour at an arc start limits the radius of convergence of the
    /// Taylor step to roughly the elapsed arc time, so fixed-size steps there
    /// would destroy the order of the method.
    pub ramp: f64,
    /// Bound enforced on the running constraint residual.
    pub tol_constraint: f64,
    /// Newton tolerance for map inversion.
    pub tol_newton: f64,
    /// Distance at which a mark colliding with the driving point is fatal.
    pub tol_collision: f64,
    /// Bound on the startup defect; the startup capacity is halved until met.
    pub tol_startup: f64,
    /// Driving-velocity magnitude that makes the loop guard fire. Must stay
    /// clear of the transient `√t` speeds at arc starts, which peak around
    /// `c/(2√startup)` with `c` of order a few.
    pub loop_threshold: f64,
    /// Record every n-th step (1 = every step).
    pub sample_stride: usize,
    /// Right-hand-side choice for disc traces.
    pub radial_mode: RadialMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            h: 1e-4,
            order: 4,
            startup: 1e-9,
            ramp: 0.01,
            tol_constraint: 1e-6,
            tol_newton: 1e-13,
            tol_collision: 1e-9,
            tol_startup: 1e-8,
            loop_threshold: 1e6,
            sample_stride: 1,
            radial_mode: RadialMode::OriginMark,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Invalid(format!("step h={} must be positive", self.h)));
        }
        if !(1..=8).contains(&self.order) {
            return Err(Error::Invalid(format!("order {} outside 1..=8", self.order)));
        }
        if !(self.startup > 0.0 && self.startup < 1.0) {
            return Err(Error::Invalid(format!("startup {} outside (0,1)", self.startup)));
        }
        if !(self.ramp > 0.0) {
            return Err(Error::Invalid(format!("ramp {} must be positive", self.ramp)));
        }
        for (name, v) in [
            ("tol_constraint", self.tol_constraint),
            ("tol_newton", self.tol_newton),
            ("tol_collision", self.tol_collision),
            ("tol_startup", self.tol_startup),
            ("loop_threshold", self.loop_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name}={v} must be positive")));
            }
        }
        if self.sample_stride == 0 {
            return Err(Error::Invalid("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}
