//! Growth of a single half-plane slit along trajectory arcs of a quadratic
//! differential, driven as a coupled ODE system.
//!
//! The mapped-out differential keeps a finite factorization whose marked
//! points flow under the uniformizing maps; the driving point is tied to
//! the marks by a conserved linear combination and moves with velocity
//! `ξ' = −Σ eᵢ/(Xᵢ−ξ)`, while each mark obeys `Xᵢ' = 2/(Xᵢ−ξ)`. The tip
//! preimage is always a double zero of the mapped-out differential, which
//! is what makes turning the slit at a corner the same problem as starting
//! it: a fresh launch from a double zero, with the old base pair demoted to
//! ordinary marks.
//!
//! Steps are Taylor expansions of adjustable order computed by coefficient
//! recurrences; the physical tip rides along by Runge–Kutta on top of the
//! dense output.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;

use crate::angle::{ratio_f64, snap_ratio, PiAngle};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qdiff::{self, FactorizedQD};
use crate::series::{self, Series};
use crate::slitmaps::TiltedSlitMap;

/// Tolerance for imaginary leakage into quantities that must stay real.
/// Conjugate-symmetric mark sets cancel imaginary parts exactly, so any
/// leakage beyond roundoff means the symmetry broke.
pub const TOL_IMAG: f64 = 1e-10;
/// Fraction of `gap / max speed` a single step may cover.
const STEP_SAFETY: f64 = 0.1;
/// Steps below this are treated as a breakdown of the integration.
const STEP_FLOOR: f64 = 1e-15;
/// Maximum halvings of the startup capacity before giving up.
const MAX_STARTUP_HALVINGS: u32 = 60;
/// Denominator bound when snapping angles to rational multiples of π.
const SNAP_DEN: i64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkRole {
    /// Left preimage of the current arc's base point.
    BaseMinus,
    /// Right preimage of the current arc's base point.
    BasePlus,
    /// Any other mark on the real line.
    Boundary,
    /// Mark strictly inside the upper half-plane.
    Interior,
}

impl MarkRole {
    pub fn is_real(self) -> bool {
        self != MarkRole::Interior
    }

    /// Base marks of a finished arc become ordinary boundary marks.
    fn demoted(self) -> MarkRole {
        match self {
            MarkRole::Interior => MarkRole::Interior,
            _ => MarkRole::Boundary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mark {
    pub position: Complex64,
    pub exponent: Ratio<i64>,
    pub role: MarkRole,
}

impl Mark {
    pub fn exponent_f64(&self) -> f64 {
        ratio_f64(self.exponent)
    }
}

/// When the current arc ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once the arc has added this much capacity-time.
    Capacity(f64),
    /// Stop once the arc has added this much arclength.
    Length(f64),
}

#[derive(Debug, Clone)]
pub enum ArcKind {
    /// First arc: leave the real line at this angle.
    Launch { theta_dep: PiAngle },
    /// Later arcs: turn by `delta` (positive = toward the right-hand side).
    Turn { delta: PiAngle },
}

#[derive(Debug, Clone)]
pub struct ArcSpec {
    pub kind: ArcKind,
    pub stop: StopRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CapacityReached,
    LengthReached,
    LoopDetected,
    Corner,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::CapacityReached => "capacity_reached",
            StopReason::LengthReached => "length_reached",
            StopReason::LoopDetected => "loop_detected",
            StopReason::Corner => "corner",
        }
    }
}

/// One recorded state of the trace.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub xi: f64,
    pub tip: Complex64,
    pub arclength: f64,
    /// Conservation-law residual, with imaginary leakage folded in.
    pub residual: f64,
    /// Driving velocity at this state (diagnostic; not part of the CSV schema).
    pub xi_dot: f64,
    pub marks: Vec<(Complex64, Ratio<i64>)>,
}

/// Instantaneous derivatives of the driving system.
#[derive(Debug, Clone)]
pub struct Derivatives {
    /// Real part of `−Σ eᵢ/(Xᵢ−ξ)`.
    pub xi_dot: f64,
    /// Imaginary part left over by that sum; nonzero only when the mark set
    /// is not conjugate-symmetric.
    pub imag_residual: f64,
    /// `2/(Xᵢ−ξ)` for each mark, in mark order.
    pub mark_dots: Vec<Complex64>,
}

/// Right-hand side of the driving system at the given state.
pub fn rhs(state: &ChordalState) -> Result<Derivatives> {
    let mut drift = Complex64::zero();
    let mut mark_dots = Vec::with_capacity(state.marks.len());
    for m in &state.marks {
        let d = m.position - state.xi;
        if d.norm() == 0.0 {
            return Err(Error::Collision {
                mark: m.position,
                dist: 0.0,
            });
        }
        drift += m.exponent_f64() / d;
        mark_dots.push(2.0 / d);
    }
    Ok(Derivatives {
        xi_dot: -drift.re,
        imag_residual: drift.im.abs(),
        mark_dots,
    })
}

/// True when the trace is about to destroy itself: the driving velocity
/// exceeds `threshold`, or the driving point has come within
/// `tol_collision` of a mark on the real line (the preimage of the slit
/// base or of an earlier corner), which signals an imminent boundary or
/// self-intersection.
pub fn loop_guard(state: &ChordalState, threshold: f64, tol_collision: f64) -> bool {
    let near_real_mark = state
        .marks
        .iter()
        .filter(|m| m.role.is_real())
        .any(|m| (m.position - state.xi).norm() < tol_collision);
    if near_real_mark {
        return true;
    }
    match rhs(state) {
        Ok(d) => d.xi_dot.abs() > threshold,
        Err(_) => true,
    }
}

/// Bookkeeping for one arc of the trace.
#[derive(Debug, Clone)]
pub struct ArcRecord {
    pub index: usize,
    /// Capacity-time at which the arc began (before its startup).
    pub t_start: f64,
    /// Driving value the arc launched from.
    pub launch: f64,
    pub theta_dep: PiAngle,
    /// Trajectory phase of the arc.
    pub phi: PiAngle,
    pub mu_plus: Ratio<i64>,
    pub mu_minus: Ratio<i64>,
    /// Startup capacity actually used after halvings.
    pub startup: f64,
    /// Mismatch between the constraint value and the startup map's
    /// tip preimage, at the startup time.
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct ChordalState {
    pub t: f64,
    pub xi: f64,
    pub marks: Vec<Mark>,
    /// Conserved value of `2ξ + Σ eᵢXᵢ`.
    pub sigma0: f64,
    pub tip: Complex64,
    /// Unit tangent of the trace at the tip.
    pub tip_dir: Complex64,
    pub arclength: f64,
    pub qd: FactorizedQD,
    /// Trajectory phase of the current arc.
    pub phi: PiAngle,
}

impl ChordalState {
    /// `|2ξ + Σ eᵢ Re Xᵢ − σ₀| + |Σ eᵢ Im Xᵢ|`.
    pub fn constraint_residual(&self) -> f64 {
        let mut acc = Complex64::zero();
        for m in &self.marks {
            acc += m.exponent_f64() * m.position;
        }
        (2.0 * self.xi + acc.re - self.sigma0).abs() + acc.im.abs()
    }

    /// Distance from the driving point to the nearest mark.
    pub fn gap(&self) -> f64 {
        self.marks
            .iter()
            .map(|m| (m.position - self.xi).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Exponents of the mapped-out differential: all marks plus the double
    /// zero at the tip preimage. Sorted for comparisons.
    pub fn exponent_multiset(&self) -> Vec<Ratio<i64>> {
        let mut v: Vec<Ratio<i64>> = self.marks.iter().map(|m| m.exponent).collect();
        v.push(Ratio::new(2, 1));
        v.sort();
        v
    }

    /// Quadratic coefficient of the mapped-out differential at the tip
    /// preimage: `R · Π (ξ−Xᵢ)^{eᵢ}`.
    pub fn tip_quadratic_coeff(&self) -> Complex64 {
        let mut acc = self.qd.prefactor;
        for m in &self.marks {
            acc *= qdiff::pow_down(Complex64::new(self.xi, 0.0) - m.position, m.exponent_f64());
        }
        acc
    }

    /// Growth speed of the physical tip, `2·√(|Φ(ξ)| / |Q(tip)|)`.
    pub fn tip_speed(&self) -> Result<f64> {
        let q = qdiff::evaluate(&self.qd, self.tip)?;
        if q.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "tip {} sits on a zero of the differential",
                self.tip
            )));
        }
        let mut log_phi = self.qd.prefactor.norm().ln();
        for m in &self.marks {
            log_phi += m.exponent_f64() * (m.position - self.xi).norm().ln();
        }
        Ok(2.0 * (0.5 * (log_phi - q.norm().ln())).exp())
    }
}

/// Exact base-pair exponents for a launch of local exponent `n` at departure
/// angle θ: `μ⁺ = (n+2)·θ/π − 2` and `μ⁻ = (n+2)·(1−θ/π) − 2`.
pub(crate) fn base_exponents(n: Ratio<i64>, theta: &PiAngle) -> Result<(Ratio<i64>, Ratio<i64>)> {
    let r = theta
        .over_pi()
        .or_else(|| snap_ratio(theta.radians() / std::f64::consts::PI, SNAP_DEN, 1e-9))
        .ok_or_else(|| {
            Error::Invalid(format!(
                "departure angle {} is not a rational multiple of pi",
                theta.radians()
            ))
        })?;
    let two = Ratio::new(2, 1);
    let np2 = n + two;
    Ok((np2 * r - two, np2 * (Ratio::new(1, 1) - r) - two))
}

pub(crate) struct Startup {
    pub(crate) map: TiltedSlitMap,
    pub(crate) xi: f64,
    pub(crate) marks: Vec<Mark>,
    pub(crate) defect: f64,
}

/// Build the post-startup state of a fresh arc: approximate its first piece
/// by a straight slit of capacity `2s`, pull every existing mark back through
/// that map, append the new base pair, and read the driving value off the
/// conservation law. The defect compares that value with the map's own tip
/// preimage; it vanishes exactly when the arc really is straight.
pub(crate) fn startup_state(
    prev_marks: &[Mark],
    launch_x: f64,
    p: f64,
    mu: (Ratio<i64>, Ratio<i64>),
    sigma0: f64,
    s: f64,
    cfg: &RunConfig,
) -> Result<Startup> {
    let map = TiltedSlitMap::make(p, launch_x, 2.0 * s)?;
    let mut marks = Vec::with_capacity(prev_marks.len() + 2);
    for m in prev_marks {
        // the map has real coefficients, so lower half-plane marks pull back
        // as conjugates of their mirror images
        let z = if m.position.im < 0.0 {
            let w = m.position.conj();
            map.invert(w, Some(w), cfg.tol_newton)?.conj()
        } else {
            map.invert(m.position, Some(m.position), cfg.tol_newton)?
        };
        let z = if m.role.is_real() {
            if z.im.abs() > TOL_IMAG * (1.0 + z.re.abs()) {
                return Err(Error::SymmetryLoss(z.im.abs()));
            }
            Complex64::new(z.re, 0.0)
        } else {
            z
        };
        marks.push(Mark {
            position: z,
            exponent: m.exponent,
            role: m.role.demoted(),
        });
    }
    let (cm, tip_pre, cp) = map.landmarks();
    marks.push(Mark {
        position: Complex64::new(cm, 0.0),
        exponent: mu.1,
        role: MarkRole::BaseMinus,
    });
    marks.push(Mark {
        position: Complex64::new(cp, 0.0),
        exponent: mu.0,
        role: MarkRole::BasePlus,
    });
    let mut acc = Complex64::zero();
    for m in &marks {
        acc += m.exponent_f64() * m.position;
    }
    if acc.im.abs() > TOL_IMAG * (1.0 + acc.re.abs()) {
        return Err(Error::SymmetryLoss(acc.im.abs()));
    }
    let xi = 0.5 * (sigma0 - acc.re);
    Ok(Startup {
        map,
        xi,
        marks,
        defect: (xi - tip_pre).abs(),
    })
}

/// Run `startup_state`, halving `s` until the defect is within tolerance.
fn converged_startup(
    prev_marks: &[Mark],
    launch_x: f64,
    p: f64,
    mu: (Ratio<i64>, Ratio<i64>),
    sigma0: f64,
    cfg: &RunConfig,
) -> Result<(Startup, f64)> {
    let mut s = cfg.startup;
    let mut last_defect = f64::INFINITY;
    for _ in 0..=MAX_STARTUP_HALVINGS {
        let st = startup_state(prev_marks, launch_x, p, mu, sigma0, s, cfg)?;
        last_defect = st.defect;
        if st.defect <= cfg.tol_startup {
            return Ok((st, s));
        }
        s *= 0.5;
    }
    Err(Error::StartupTooCoarse {
        defect: last_defect,
        tol: cfg.tol_startup,
    })
}

/// Taylor coefficients of the driving value and every mark, in the step
/// variable τ, up to the configured order.
struct StepSeries {
    xi: Series,
    marks: Vec<Series>,
}

impl StepSeries {
    fn xi_dot(&self) -> f64 {
        self.xi.c[1].re
    }

    fn max_speed(&self) -> f64 {
        self.marks
            .iter()
            .map(|m| m.c[1].norm())
            .fold(self.xi.c[1].norm(), f64::max)
    }
}

fn taylor_series(state: &ChordalState, order: usize) -> Result<StepSeries> {
    let n = state.marks.len();
    let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
    let mut xi = Series::constant(Complex64::new(state.xi, 0.0), order);
    let mut marks: Vec<Series> = state
        .marks
        .iter()
        .map(|m| Series::constant(m.position, order))
        .collect();
    let mut diffs: Vec<Series> = (0..n).map(|_| Series::zero(order)).collect();
    let mut recips: Vec<Series> = (0..n).map(|_| Series::zero(order)).collect();
    for m in 0..order {
        for i in 0..n {
            diffs[i].c[m] = marks[i].c[m] - xi.c[m];
            if m == 0 && diffs[i].c[0].norm() == 0.0 {
                return Err(Error::Collision {
                    mark: state.marks[i].position,
                    dist: 0.0,
                });
            }
            recips[i].c[m] = series::recip_coeff(&diffs[i], &recips[i], m);
        }
        let mut drift = Complex64::zero();
        for i in 0..n {
            drift += exps[i] * recips[i].c[m];
        }
        if m == 0 && drift.im.abs() > TOL_IMAG * (1.0 + drift.re.abs()) {
            return Err(Error::SymmetryLoss(drift.im.abs()));
        }
        let scale = 1.0 / (m as f64 + 1.0);
        xi.c[m + 1] = Complex64::new(-drift.re * scale, 0.0);
        for i in 0..n {
            marks[i].c[m + 1] = 2.0 * recips[i].c[m] * scale;
        }
    }
    Ok(StepSeries { xi, marks })
}

/// Growth velocity of the physical tip at the current state: speed from the
/// mark moduli, direction from the trajectory tangent nearest the stored
/// tip direction.
pub fn tip_velocity(state: &ChordalState) -> Result<Complex64> {
    let speed = state.tip_speed()?;
    let (a, b) = qdiff::trajectory_tangents(&state.qd, state.tip, state.phi.radians())?;
    let dir = if (a * state.tip_dir.conj()).re >= 0.0 {
        a
    } else {
        b
    };
    Ok(speed * dir)
}

/// Tip velocity at step offset τ: magnitude from the mark moduli, direction
/// from the trajectory tangent closest to `reference`.
fn tip_velocity_dense(
    qd: &FactorizedQD,
    phi: f64,
    exps: &[f64],
    series: &StepSeries,
    tau: f64,
    gamma: Complex64,
    reference: Complex64,
) -> Result<Complex64> {
    let xi_tau = series.xi.eval(tau).re;
    let mut log_phi = qd.prefactor.norm().ln();
    for (i, m) in series.marks.iter().enumerate() {
        log_phi += exps[i] * (m.eval(tau) - xi_tau).norm().ln();
    }
    let q = qdiff::evaluate(qd, gamma)?;
    if q.norm() == 0.0 {
        return Err(Error::Degenerate(format!(
            "tip {gamma} reached a zero of the differential"
        )));
    }
    let speed = 2.0 * (0.5 * (log_phi - q.norm().ln())).exp();
    let (a, b) = qdiff::trajectory_tangents(qd, gamma, phi)?;
    let dir = if (a * reference.conj()).re >= 0.0 { a } else { b };
    Ok(speed * dir)
}

/// One Runge–Kutta pass for the tip and arclength over `[0, tau]`, on top of
/// the dense output of the driving system.
fn tip_step(
    state: &ChordalState,
    series: &StepSeries,
    exps: &[f64],
    tau: f64,
) -> Result<(Complex64, f64, Complex64)> {
    let phi = state.phi.radians();
    let reference = state.tip_dir;
    let qd = &state.qd;
    let k1 = tip_velocity_dense(qd, phi, exps, series, 0.0, state.tip, reference)?;
    let k2 = tip_velocity_dense(
        qd,
        phi,
        exps,
        series,
        0.5 * tau,
        state.tip + 0.5 * tau * k1,
        reference,
    )?;
    let k3 = tip_velocity_dense(
        qd,
        phi,
        exps,
        series,
        0.5 * tau,
        state.tip + 0.5 * tau * k2,
        reference,
    )?;
    let k4 = tip_velocity_dense(qd, phi, exps, series, tau, state.tip + tau * k3, reference)?;
    let tip = state.tip + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let dlen = tau / 6.0 * (k1.norm() + 2.0 * k2.norm() + 2.0 * k3.norm() + k4.norm());
    let dir_end = tip_velocity_dense(qd, phi, exps, series, tau, tip, reference)?;
    Ok((tip, dlen, dir_end / dir_end.norm()))
}

/// Advance every dynamical variable by one Taylor step of the given order,
/// carrying the tip along by Runge–Kutta on the dense output.
pub fn taylor_step(state: &ChordalState, h: f64, order: usize) -> Result<ChordalState> {
    if !(h > 0.0) || !(1..=8).contains(&order) {
        return Err(Error::Invalid(format!(
            "step h={h} must be positive and order {order} within 1..=8"
        )));
    }
    let series = taylor_series(state, order)?;
    let gap = state.gap();
    if h * series.max_speed() >= STEP_SAFETY * gap {
        return Err(Error::StepTooLarge {
            h,
            horizon: STEP_SAFETY * gap / series.max_speed(),
            gap,
        });
    }
    let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
    let (tip, dlen, dir) = tip_step(state, &series, &exps, h)?;
    let mut next = state.clone();
    next.t += h;
    next.xi = series.xi.eval(h).re;
    for (mark, s) in next.marks.iter_mut().zip(&series.marks) {
        mark.position = s.eval(h);
    }
    next.tip = tip;
    next.tip_dir = dir;
    next.arclength += dlen;
    Ok(next)
}

/// All departure angles in (0, π) at which a trajectory of phase `phi` can
/// leave the real line at `xi0`: solutions of `arg aₙ + (n+2)θ = 2φ (mod 2π)`
/// where `aₙ` is the leading local coefficient of the differential there.
pub fn admissible_departures(
    qd: &FactorizedQD,
    xi0: f64,
    phi: &PiAngle,
) -> Result<Vec<PiAngle>> {
    let here = Complex64::new(xi0, 0.0);
    let launch_factor = qd
        .factors
        .iter()
        .find(|f| (f.location - here).norm() <= 1e-12 * (1.0 + xi0.abs()));
    let n = launch_factor.map(|f| f.exponent).unwrap_or_else(Ratio::zero);
    let a_n = match launch_factor {
        Some(f) => qdiff::evaluate_without(qd, here, f.location)?,
        None => qdiff::evaluate(qd, here)?,
    };
    if a_n.norm() == 0.0 {
        return Err(Error::Degenerate(format!(
            "differential vanishes identically at {xi0}"
        )));
    }
    let np2 = n + Ratio::new(2, 1);
    let inv = np2.recip();
    let arg_a = PiAngle::from_f64_snapped(qdiff::arg_down(a_n));
    let base = phi.scale(Ratio::new(2, 1)).sub(&arg_a);
    let reach = (ratio_f64(np2) / 2.0).abs().ceil() as i64 + 2;
    let mut out: Vec<PiAngle> = Vec::new();
    for m in -reach..=reach {
        let theta = base
            .add(&PiAngle::exact(Ratio::new(2 * m, 1)))
            .scale(inv);
        let v = theta.radians();
        if v > 1e-12 && v < std::f64::consts::PI - 1e-12 {
            out.push(theta);
        }
    }
    out.sort_by(|a, b| a.radians().total_cmp(&b.radians()));
    out.dedup_by(|a, b| (a.radians() - b.radians()).abs() < 1e-12);
    Ok(out)
}

/// Start the first arc: leave the real line at `launch_x` under departure
/// angle `theta_dep`, replacing any local factor by the base pair and
/// pulling all other factors back through the startup map.
pub fn init_arc(
    qd: &FactorizedQD,
    launch_x: f64,
    theta_dep: &PiAngle,
    cfg: &RunConfig,
) -> Result<(ChordalState, ArcRecord)> {
    let theta = theta_dep.radians();
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::Invalid(format!(
            "departure angle {theta} outside (0, π)"
        )));
    }
    let here = Complex64::new(launch_x, 0.0);
    let launch_factor = qd
        .factors
        .iter()
        .find(|f| (f.location - here).norm() <= 1e-12 * (1.0 + launch_x.abs()))
        .cloned();
    let n = launch_factor
        .as_ref()
        .map(|f| f.exponent)
        .unwrap_or_else(Ratio::zero);
    if n <= Ratio::new(-2, 1) {
        return Err(Error::Invalid(format!(
            "no slit can leave a point of exponent {n}"
        )));
    }
    let a_n = match &launch_factor {
        Some(f) => qdiff::evaluate_without(qd, here, f.location)?,
        None => qdiff::evaluate(qd, here)?,
    };
    if a_n.norm() == 0.0 {
        return Err(Error::Degenerate(format!(
            "differential vanishes identically at launch {launch_x}"
        )));
    }
    // phase of the arc: arg aₙ + (n+2)θ = 2φ
    let phi = PiAngle::from_f64_snapped(0.5 * qdiff::arg_down(a_n))
        .add(&theta_dep.scale((n + Ratio::new(2, 1)) / Ratio::new(2, 1)))
        .mod_pi();
    let mu = base_exponents(n, theta_dep)?;
    let prev_marks: Vec<Mark> = qd
        .factors
        .iter()
        .filter(|f| match &launch_factor {
            Some(lf) => f.location != lf.location,
            None => true,
        })
        .map(|f| Mark {
            position: f.location,
            exponent: f.exponent,
            role: if f.location.im == 0.0 {
                MarkRole::Boundary
            } else {
                MarkRole::Interior
            },
        })
        .collect();
    let mut sigma0 = ratio_f64(n) * launch_x;
    for m in &prev_marks {
        sigma0 += m.exponent_f64() * m.position.re;
    }
    let p = theta / std::f64::consts::PI;
    let (st, s_used) = converged_startup(&prev_marks, launch_x, p, mu, sigma0, cfg)?;
    let state = ChordalState {
        t: s_used,
        xi: st.xi,
        marks: st.marks,
        sigma0,
        tip: st.map.tip(),
        tip_dir: Complex64::new(0.0, theta).exp(),
        arclength: (st.map.tip() - here).norm(),
        qd: qd.clone(),
        phi,
    };
    let record = ArcRecord {
        index: 0,
        t_start: 0.0,
        launch: launch_x,
        theta_dep: *theta_dep,
        phi,
        mu_plus: mu.0,
        mu_minus: mu.1,
        startup: s_used,
        defect: st.defect,
    };
    Ok((state, record))
}

/// Turn the trace by `delta` at its current tip. The tip preimage carries a
/// double zero of the mapped-out differential, so this is a relaunch with
/// local exponent 2: departure angle (π−δ)/2, base exponents ∓2δ/π, phase
/// shifted by −δ, and the previous base pair demoted to ordinary marks.
pub fn corner_turn(
    state: &ChordalState,
    delta: &PiAngle,
    cfg: &RunConfig,
) -> Result<(ChordalState, ArcRecord)> {
    let d = delta.radians();
    if !(d.abs() < std::f64::consts::PI) {
        return Err(Error::Invalid(format!("turn angle {d} outside (−π, π)")));
    }
    for f in &state.qd.factors {
        if (state.tip - f.location).norm() < 1e-9 {
            return Err(Error::CornerAtSingularity(state.tip));
        }
    }
    let speed = state.tip_speed()?;
    if !speed.is_finite() {
        return Err(Error::CornerAtSingularity(state.tip));
    }
    let theta_new = PiAngle::exact(Ratio::new(1, 1))
        .sub(delta)
        .scale(Ratio::new(1, 2));
    let mu = base_exponents(Ratio::new(2, 1), &theta_new)?;
    let corner_t = state.t;
    let corner_xi = state.xi;
    // refresh the conserved value from the pre-corner state
    let mut sigma0 = 2.0 * corner_xi;
    for m in &state.marks {
        sigma0 += m.exponent_f64() * m.position.re;
    }
    let p = theta_new.radians() / std::f64::consts::PI;
    let (st, s_used) = converged_startup(&state.marks, corner_xi, p, mu, sigma0, cfg)?;
    // physical tip: the straight startup piece of z-length ℓ maps to a
    // quadratic-chart arc of extent |γ'|ℓ²/4 in the turned direction
    let kappa = p.powf(p) * (1.0 - p).powf(1.0 - p);
    let ell = kappa * st.map.s;
    let advance = speed * ell * ell / 4.0;
    let dir_new = state.tip_dir * Complex64::new(0.0, -d).exp();
    let phi = state.phi.sub(delta).mod_pi();
    let record = ArcRecord {
        index: 0,
        t_start: corner_t,
        launch: corner_xi,
        theta_dep: theta_new,
        phi,
        mu_plus: mu.0,
        mu_minus: mu.1,
        startup: s_used,
        defect: st.defect,
    };
    let mut next = state.clone();
    next.t = corner_t + s_used;
    next.xi = st.xi;
    next.marks = st.marks;
    next.sigma0 = sigma0;
    next.tip += advance * dir_new;
    next.tip_dir = dir_new;
    next.arclength += advance;
    next.phi = phi;
    Ok((next, record))
}

/// Everything the trace produced.
#[derive(Debug, Clone)]
pub struct TraceResult {
    pub samples: Vec<Sample>,
    pub arcs: Vec<ArcRecord>,
    pub stop_reason: StopReason,
    pub state: ChordalState,
}

pub fn trace(
    qd: &FactorizedQD,
    launch_x: f64,
    arcs: &[ArcSpec],
    cfg: &RunConfig,
) -> Result<TraceResult> {
    cfg.validate()?;
    if arcs.is_empty() {
        return Err(Error::Invalid("a trace needs at least one arc".into()));
    }
    let mut tracer = Tracer::new(qd.clone(), cfg.clone());
    for (k, arc) in arcs.iter().enumerate() {
        match (&arc.kind, k) {
            (ArcKind::Launch { theta_dep }, 0) => tracer.launch(launch_x, theta_dep)?,
            (ArcKind::Turn { delta }, k) if k > 0 => {
                if let Err(err) = tracer.turn(delta) {
                    log::warn!("corner {k} failed: {err}; returning partial trace");
                    return Ok(tracer.into_result(StopReason::Corner));
                }
            }
            (ArcKind::Launch { .. }, _) => {
                return Err(Error::Invalid(format!("arc {k} repeats the launch")))
            }
            (ArcKind::Turn { .. }, _) => {
                return Err(Error::Invalid("the first arc must be a launch".into()))
            }
        }
        if let Some(reason) = tracer.run_arc(&arc.stop)? {
            return Ok(tracer.into_result(reason));
        }
    }
    let last = match arcs.last().map(|a| a.stop) {
        Some(StopRule::Capacity(_)) => StopReason::CapacityReached,
        _ => StopReason::LengthReached,
    };
    Ok(tracer.into_result(last))
}

struct Tracer {
    cfg: RunConfig,
    qd: FactorizedQD,
    state: Option<ChordalState>,
    samples: Vec<Sample>,
    arcs: Vec<ArcRecord>,
    /// Capacity-time at which the current arc began (before startup).
    arc_t0: f64,
    /// Arclength when the current arc began.
    arc_len0: f64,
    steps_since_sample: usize,
}

impl Tracer {
    fn new(qd: FactorizedQD, cfg: RunConfig) -> Self {
        Tracer {
            cfg,
            qd,
            state: None,
            samples: Vec::new(),
            arcs: Vec::new(),
            arc_t0: 0.0,
            arc_len0: 0.0,
            steps_since_sample: 0,
        }
    }

    /// First arc: leave the real line at `theta_dep` from `launch_x`.
    fn launch(&mut self, launch_x: f64, theta_dep: &PiAngle) -> Result<()> {
        let (state, record) = init_arc(&self.qd, launch_x, theta_dep, &self.cfg)?;
        self.arc_t0 = 0.0;
        self.arc_len0 = 0.0;
        self.arcs.push(record);
        self.state = Some(state);
        self.record_sample(true);
        Ok(())
    }

    /// Corner: turn the trace by `delta` and relaunch from the tip preimage.
    fn turn(&mut self, delta: &PiAngle) -> Result<()> {
        let state = self.state.as_ref().expect("turn before launch");
        let (next, mut record) = corner_turn(state, delta, &self.cfg)?;
        record.index = self.arcs.len();
        self.arc_t0 = record.t_start;
        self.arc_len0 = state.arclength;
        self.arcs.push(record);
        self.state = Some(next);
        self.record_sample(true);
        Ok(())
    }

    /// Integrate the current arc until its stop rule fires. Returns a reason
    /// only when the whole trace must end here (loop guard).
    fn run_arc(&mut self, stop: &StopRule) -> Result<Option<StopReason>> {
        let order = self.cfg.order;
        let (t_end, len_end) = match *stop {
            StopRule::Capacity(dt) => {
                if dt <= 0.0 {
                    return Err(Error::Invalid(format!("capacity budget {dt} must be positive")));
                }
                let t_end = self.arc_t0 + dt;
                if t_end <= self.state.as_ref().unwrap().t {
                    return Err(Error::Invalid(format!(
                        "capacity budget {dt} does not outlast the startup"
                    )));
                }
                (Some(t_end), None)
            }
            StopRule::Length(l) => {
                if l <= 0.0 {
                    return Err(Error::Invalid(format!("length budget {l} must be positive")));
                }
                let len_end = self.arc_len0 + l;
                if len_end <= self.state.as_ref().unwrap().arclength {
                    return Err(Error::Invalid(format!(
                        "length budget {l} is shorter than the startup slit; lower the startup capacity"
                    )));
                }
                (None, Some(len_end))
            }
        };
        loop {
            let state = self.state.as_ref().unwrap();
            // A boundary mark closing in on ξ heralds the tip swallowing a
            // stretch of the real line: stop gracefully.  Interior marks are
            // genuine singularities of the differential and end the run hard.
            let nearest = state
                .marks
                .iter()
                .map(|m| {
                    let dist = (m.position - Complex64::new(state.xi, 0.0)).norm();
                    (m.role, m.position, dist)
                })
                .min_by(|a, b| a.2.total_cmp(&b.2));
            if let Some((role, position, dist)) = nearest {
                if dist < self.cfg.tol_collision {
                    if role.is_real() {
                        log::info!(
                            "loop guard fired at t={}: ξ within {:.3e} of {}",
                            state.t,
                            dist,
                            position
                        );
                        self.record_sample(true);
                        return Ok(Some(StopReason::LoopDetected));
                    }
                    return Err(Error::Collision {
                        mark: position,
                        dist,
                    });
                }
            }
            let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
            let series = taylor_series(state, order)?;
            if series.xi_dot().abs() >= self.cfg.loop_threshold {
                log::info!(
                    "loop guard fired at t={}: |ξ'|={:.3e}",
                    state.t,
                    series.xi_dot().abs()
                );
                self.record_sample(true);
                return Ok(Some(StopReason::LoopDetected));
            }
            let gap = state.gap();
            let vmax = series.max_speed().max(1e-300);
            let h_safe = STEP_SAFETY * gap / vmax;
            let ramp = self.cfg.h * (state.t - self.arc_t0) / self.cfg.ramp;
            let mut h = self.cfg.h.min(ramp).min(h_safe);
            let mut capacity_hit = false;
            if let Some(te) = t_end {
                let remaining = te - state.t;
                if remaining <= h {
                    h = remaining;
                    capacity_hit = true;
                }
            }
            if h < STEP_FLOOR {
                if capacity_hit {
                    self.record_sample(true);
                    return Ok(None);
                }
                return Err(Error::StepTooLarge {
                    h,
                    horizon: h_safe,
                    gap,
                });
            }
            let (tip, dlen, dir) = tip_step(state, &series, &exps, h)?;
            if let Some(le) = len_end {
                if state.arclength + dlen >= le {
                    // bisect the step offset where the arclength target falls
                    let mut lo = 0.0;
                    let mut hi = h;
                    for _ in 0..64 {
                        let mid = 0.5 * (lo + hi);
                        let (_, dl, _) = tip_step(state, &series, &exps, mid)?;
                        if state.arclength + dl >= le {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo <= 1e-16 * (1.0 + hi) {
                            break;
                        }
                    }
                    let tau = 0.5 * (lo + hi);
                    let (tip, dlen, dir) = tip_step(state, &series, &exps, tau)?;
                    self.commit(&series, tau, tip, dlen, dir)?;
                    self.record_sample(true);
                    return Ok(None);
                }
            }
            self.commit(&series, h, tip, dlen, dir)?;
            if capacity_hit {
                self.record_sample(true);
                return Ok(None);
            }
            self.record_sample(false);
        }
    }

    fn commit(
        &mut self,
        series: &StepSeries,
        tau: f64,
        tip: Complex64,
        dlen: f64,
        dir: Complex64,
    ) -> Result<()> {
        let state = self.state.as_mut().unwrap();
        state.t += tau;
        state.xi = series.xi.eval(tau).re;
        for (mark, s) in state.marks.iter_mut().zip(&series.marks) {
            mark.position = s.eval(tau);
        }
        state.tip = tip;
        state.tip_dir = dir;
        state.arclength += dlen;
        let residual = state.constraint_residual();
        if residual > self.cfg.tol_constraint {
            return Err(Error::ConstraintDrift {
                residual,
                tol: self.cfg.tol_constraint,
                t: state.t,
            });
        }
        Ok(())
    }

    fn record_sample(&mut self, force: bool) {
        self.steps_since_sample += 1;
        if !force && self.steps_since_sample < self.cfg.sample_stride {
            return;
        }
        self.steps_since_sample = 0;
        let state = self.state.as_ref().unwrap();
        self.samples.push(Sample {
            t: state.t,
            xi: state.xi,
            xi_dot: rhs(state).map(|d| d.xi_dot).unwrap_or(f64::NAN),
            tip: state.tip,
            arclength: state.arclength,
            residual: state.constraint_residual(),
            marks: state
                .marks
                .iter()
                .map(|m| (m.position, m.exponent))
                .collect(),
        });
    }

    fn into_result(self, stop_reason: StopReason) -> TraceResult {
        TraceResult {
            samples: self.samples,
            arcs: self.arcs,
            stop_reason,
            state: self.state.expect("trace produced no state"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdiff::{make_qd, unit_qd};
    use crate::slitmaps::driving_coefficient;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg_fast() -> RunConfig {
        RunConfig {
            h: 1e-3,
            ..Default::default()
        }
    }

    fn launch_arc(theta_over_pi: (i64, i64), stop: StopRule) -> ArcSpec {
        ArcSpec {
            kind: ArcKind::Launch {
                theta_dep: PiAngle::exact(Ratio::new(theta_over_pi.0, theta_over_pi.1)),
            },
            stop,
        }
    }

    #[test]
    fn vertical_slit_is_exactly_centered() {
        let res = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.5))],
            &cfg_fast(),
        )
        .unwrap();
        assert_eq!(res.stop_reason, StopReason::CapacityReached);
        for s in &res.samples {
            assert_eq!(s.xi, 0.0, "driving value must stay identically zero");
        }
        let end = &res.state;
        assert_relative_eq!(end.t, 0.5, max_relative = 1e-12);
        // base pair at ±2√t, tip at 2i√t, length 2√t
        let r = 2.0 * end.t.sqrt();
        let mut base: Vec<f64> = end.marks.iter().map(|m| m.position.re).collect();
        base.sort_by(f64::total_cmp);
        assert_relative_eq!(base[0], -r, max_relative = 1e-6);
        assert_relative_eq!(base[1], r, max_relative = 1e-6);
        // and they stay mirror images to the last bit
        assert_eq!(base[0], -base[1]);
        assert!((end.tip - c(0.0, r)).norm() < 1e-5);
        assert_relative_eq!(end.arclength, r, max_relative = 1e-5);
    }

    #[test]
    fn tilted_slit_follows_the_square_root_law() {
        // straight slit at angle π/4 from the origin
        let res = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 4), StopRule::Capacity(0.3))],
            &cfg_fast(),
        )
        .unwrap();
        let end = &res.state;
        let t = end.t;
        assert_relative_eq!(t, 0.3, max_relative = 1e-12);
        let coeff = driving_coefficient(0.25);
        assert_relative_eq!(end.xi, coeff * t.sqrt(), max_relative = 1e-7);
        // closed-form state: root spread s(t), marks at −ps and (1−p)s
        let p: f64 = 0.25;
        let s = 2.0 * (t / (p * (1.0 - p))).sqrt();
        let minus = end
            .marks
            .iter()
            .find(|m| m.role == MarkRole::BaseMinus)
            .unwrap();
        let plus = end
            .marks
            .iter()
            .find(|m| m.role == MarkRole::BasePlus)
            .unwrap();
        assert_relative_eq!(minus.position.re, -p * s, max_relative = 1e-7);
        assert_relative_eq!(plus.position.re, (1.0 - p) * s, max_relative = 1e-7);
        assert_eq!(minus.exponent, Ratio::new(-1, 2)); // −2p with p = 1/4
        assert_eq!(plus.exponent, Ratio::new(-3, 2)); // 2p − 2
        // physical tip rides the ray of angle π/4
        let kappa = p.powf(p) * (1.0 - p).powf(1.0 - p);
        let want = kappa * s * c(0.0, PI * p).exp();
        assert!(
            (end.tip - want).norm() < 1e-6,
            "tip {} vs closed form {want}",
            end.tip
        );
        assert!(res.samples.iter().all(|s| s.residual < 1e-9));
    }

    #[test]
    fn launched_from_a_simple_zero() {
        // differential z¹: the same ray is traced with base exponents
        // μ⁺ = 3θ/π − 2, μ⁻ = 1 − 3θ/π, and the driving law is unchanged.
        let qd = make_qd(c(1.0, 0.0), &[(c(0.0, 0.0), Ratio::new(1, 1))]).unwrap();
        let res = trace(
            &qd,
            0.0,
            &[launch_arc((1, 4), StopRule::Capacity(0.3))],
            &cfg_fast(),
        )
        .unwrap();
        let end = &res.state;
        assert_relative_eq!(
            end.xi,
            driving_coefficient(0.25) * end.t.sqrt(),
            max_relative = 1e-7
        );
        let arc = &res.arcs[0];
        assert_eq!(arc.mu_plus, Ratio::new(-5, 4)); // 3·(1/4) − 2
        assert_eq!(arc.mu_minus, Ratio::new(1, 4)); // 1 − 3/4
    }

    #[test]
    fn conservation_with_spectator_marks() {
        // a zero at 2 and a pole at −1, launch from the regular point 0
        let qd = make_qd(
            c(1.0, 0.0),
            &[(c(2.0, 0.0), Ratio::new(1, 1)), (c(-1.0, 0.0), Ratio::new(-1, 1))],
        )
        .unwrap();
        let res = trace(
            &qd,
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.05))],
            &cfg_fast(),
        )
        .unwrap();
        for s in &res.samples {
            assert!(s.residual < 1e-9, "residual {} at t={}", s.residual, s.t);
        }
        // boundary marks stay on the real line
        let end = &res.state;
        assert!(end.marks.iter().all(|m| m.position.im == 0.0));
        // multiset sums to (exponent sum of Q) − 2, plus the tip's 2
        let total: Ratio<i64> = end.exponent_multiset().into_iter().sum();
        assert_eq!(total, qdiff::exponent_sum(&qd));
    }

    #[test]
    fn interior_conjugate_pair_keeps_the_driving_real() {
        let qd = make_qd(
            c(1.0, 0.0),
            &[
                (c(0.5, 1.0), Ratio::new(1, 1)),
                (c(0.5, -1.0), Ratio::new(1, 1)),
            ],
        )
        .unwrap();
        let res = trace(
            &qd,
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.04))],
            &cfg_fast(),
        )
        .unwrap();
        for s in &res.samples {
            assert!(s.residual < 1e-9);
        }
        // the pair stays conjugate
        let end = &res.state;
        let interior: Vec<&Mark> = end
            .marks
            .iter()
            .filter(|m| m.role == MarkRole::Interior)
            .collect();
        assert_eq!(interior.len(), 2);
        assert!((interior[0].position - interior[1].position.conj()).norm() < 1e-12);
    }

    #[test]
    fn right_angle_corner_relabels_the_marks() {
        // up for length 0.4, then right for length 0.3
        let res = trace(
            &unit_qd(),
            0.0,
            &[
                launch_arc((1, 2), StopRule::Length(0.4)),
                ArcSpec {
                    kind: ArcKind::Turn {
                        delta: PiAngle::exact(Ratio::new(1, 2)),
                    },
                    stop: StopRule::Length(0.3),
                },
            ],
            &cfg_fast(),
        )
        .unwrap();
        assert_eq!(res.stop_reason, StopReason::LengthReached);
        // vertical slit of length L has capacity (L/2)²
        assert_relative_eq!(res.arcs[1].t_start, 0.04, max_relative = 1e-5);
        let end = &res.state;
        let mut multiset = end.exponent_multiset();
        multiset.sort();
        let want: Vec<Ratio<i64>> = [-1, -1, -1, 1, 2]
            .iter()
            .map(|&k| Ratio::new(k, 1))
            .collect();
        assert_eq!(multiset, want);
        assert_relative_eq!(end.arclength, 0.7, max_relative = 1e-5);
        assert!(
            (end.tip - c(0.3, 0.4)).norm() < 2e-4,
            "tip {} should be near 0.3+0.4i",
            end.tip
        );
        assert!((end.tip_dir - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_turn_corner_is_a_no_op() {
        let straight = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.2))],
            &cfg_fast(),
        )
        .unwrap();
        let kinked = trace(
            &unit_qd(),
            0.0,
            &[
                launch_arc((1, 2), StopRule::Capacity(0.1)),
                ArcSpec {
                    kind: ArcKind::Turn {
                        delta: PiAngle::exact(Ratio::new(0, 1)),
                    },
                    stop: StopRule::Capacity(0.1),
                },
            ],
            &cfg_fast(),
        )
        .unwrap();
        assert!(kinked.state.xi.abs() < 1e-7);
        assert!((kinked.state.tip - straight.state.tip).norm() < 1e-4);
    }

    #[test]
    fn departures_invert_the_launch_phase() {
        // negative prefactor: arg a₀ = π, so 2φ = π + 2θ and the only
        // admissible departure for φ = 3π/4 is θ = π/4
        let qd = make_qd(c(-1.0, 0.0), &[]).unwrap();
        let phi = PiAngle::exact(Ratio::new(3, 4));
        let out = admissible_departures(&qd, 0.0, &phi).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].over_pi(), Some(Ratio::new(1, 4)));
        // and init_arc started at that angle reports the same phase
        let (state, _) = init_arc(&qd, 0.0, &out[0], &RunConfig::default()).unwrap();
        assert_eq!(state.phi.over_pi(), Some(Ratio::new(3, 4)));
    }

    #[test]
    fn rhs_hand_values() {
        // symmetric base pair: the two contributions cancel bit-exactly
        let vertical = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.25))],
            &cfg_fast(),
        )
        .unwrap();
        let d = rhs(&vertical.state).unwrap();
        assert_eq!(d.xi_dot, 0.0);
        assert_eq!(d.imag_residual, 0.0);
        // mark speeds 2/(X−ξ) point away from the driving value
        let r = 2.0 * vertical.state.t.sqrt();
        for (m, v) in vertical.state.marks.iter().zip(&d.mark_dots) {
            assert_relative_eq!(v.re, 2.0 / m.position.re, max_relative = 1e-12);
            assert!(v.re * m.position.re > 0.0);
        }
        assert_relative_eq!(d.mark_dots[0].norm(), 2.0 / r, max_relative = 1e-6);

        // one real mark of weight 1/2 at distance 2: ξ̇ = −(1/2)/2 = −1/4
        let single = ChordalState {
            t: 0.1,
            xi: 1.0,
            marks: vec![Mark {
                position: c(3.0, 0.0),
                exponent: Ratio::new(1, 2),
                role: MarkRole::Boundary,
            }],
            sigma0: 3.5,
            tip: c(1.0, 0.5),
            tip_dir: c(0.0, 1.0),
            arclength: 0.5,
            qd: unit_qd(),
            phi: PiAngle::exact(Ratio::new(1, 2)),
        };
        let d = rhs(&single).unwrap();
        assert_eq!(d.xi_dot, -0.25);
        assert_eq!(d.mark_dots, vec![c(1.0, 0.0)]);
    }

    #[test]
    fn rhs_agrees_with_finite_differences() {
        // central difference about t+h, built from two forward Taylor steps
        let res = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 3), StopRule::Capacity(0.1))],
            &cfg_fast(),
        )
        .unwrap();
        let state = res.state;
        let h = 1e-5;
        let mid = taylor_step(&state, h, 4).unwrap();
        let far = taylor_step(&state, 2.0 * h, 4).unwrap();
        let d = rhs(&mid).unwrap();
        let fd_xi = (far.xi - state.xi) / (2.0 * h);
        assert!(
            (fd_xi - d.xi_dot).abs() < 1e-7,
            "finite difference {fd_xi} vs rhs {}",
            d.xi_dot
        );
        for ((m0, m1), v) in state.marks.iter().zip(&far.marks).zip(&d.mark_dots) {
            let fd = (m1.position - m0.position) / (2.0 * h);
            assert!((fd - v).norm() < 1e-7, "mark fd {fd} vs rhs {v}");
        }
    }

    #[test]
    fn driving_is_continuous_between_samples() {
        // within each arc, consecutive samples move by at most O(Δt·|ξ̇|)
        let res = trace(
            &unit_qd(),
            0.0,
            &[
                launch_arc((1, 3), StopRule::Length(0.4)),
                ArcSpec {
                    kind: ArcKind::Turn {
                        delta: PiAngle::exact(Ratio::new(-1, 3)),
                    },
                    stop: StopRule::Length(0.3),
                },
            ],
            &cfg_fast(),
        )
        .unwrap();
        let relaunches: Vec<f64> = res.arcs.iter().skip(1).map(|a| a.t_start).collect();
        for w in res.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if relaunches.iter().any(|&t| a.t <= t && t < b.t) {
                continue; // the relaunch startup is a deliberate skip
            }
            let dt = b.t - a.t;
            let bound = 10.0 * dt * a.xi_dot.abs().max(b.xi_dot.abs()) + 1e-12;
            assert!(
                (b.xi - a.xi).abs() <= bound,
                "jump {} over [{}, {}] exceeds {bound}",
                (b.xi - a.xi).abs(),
                a.t,
                b.t
            );
        }
    }

    #[test]
    fn loop_guard_reacts_to_real_marks_and_runaway_speed() {
        let res = trace(
            &unit_qd(),
            0.0,
            &[launch_arc((1, 2), StopRule::Capacity(0.25))],
            &cfg_fast(),
        )
        .unwrap();
        let calm = res.state;
        assert!(!loop_guard(&calm, 1e4, 1e-9));
        // a boundary mark grazing the driving value trips the guard …
        let mut grazed = calm.clone();
        grazed.marks.push(Mark {
            position: c(calm.xi + 1e-12, 0.0),
            exponent: Ratio::new(-1, 1),
            role: MarkRole::Boundary,
        });
        assert!(loop_guard(&grazed, 1e4, 1e-9));
        // … and so does a runaway driving velocity on its own
        let mut fast = calm.clone();
        fast.marks.push(Mark {
            position: c(calm.xi + 1e-6, 0.0),
            exponent: Ratio::new(-1, 1),
            role: MarkRole::Boundary,
        });
        assert!(loop_guard(&fast, 1e4, 1e-9));
        assert!(!loop_guard(&fast, 1e8, 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn straight_slits_obey_the_driving_law(num in 2i64..=17) {
            // θ = (num/19)·π keeps clear of the axis on both sides
            let p = num as f64 / 19.0;
            let res = trace(
                &unit_qd(),
                1.5,
                &[launch_arc((num, 19), StopRule::Capacity(0.1))],
                &cfg_fast(),
            )
            .unwrap();
            let end = res.state;
            let want = 1.5 + driving_coefficient(p) * end.t.sqrt();
            prop_assert!((end.xi - want).abs() < 1e-6 * (1.0 + want.abs()));
            prop_assert!(res.samples.iter().all(|s| s.residual < 1e-8));
        }
    }
}
