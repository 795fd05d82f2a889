//! Driving system for several slits growing simultaneously with prescribed
//! capacity weights.
//!
//! With weights `b_k` summing to one, the half-plane flow is
//! `ġ = Σ_k 2b_k/(g − ξ_k)`, every tip preimage is a double zero of the
//! mapped-out differential, and the driving values obey
//!
//! ```text
//! ξ̇_l = Σ_{k≠l} 2(b_k + b_l)/(ξ_l − ξ_k) − b_l · Σ_i e_i/(X_i − ξ_l)
//! ```
//!
//! while every mark rides the ambient field, `Ẋ = Σ_k 2b_k/(X − ξ_k)`.
//! The combination `2Σξ_l + Σ e_i X_i` is a first integral, monitored as the
//! running residual. A single slit with `b = 1` degenerates to the chordal
//! system, and this module arranges its arithmetic so the degenerate case
//! reproduces the chordal driving trace bit for bit.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;

use crate::angle::{ratio_f64, PiAngle};
use crate::chordal::{base_exponents, startup_state, Mark, MarkRole, StopReason, TOL_IMAG};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qdiff::FactorizedQD;
use crate::series::{self, Series};
use crate::slitmaps::TiltedSlitMap;

const STEP_SAFETY: f64 = 0.1;
const STEP_FLOOR: f64 = 1e-15;
const MAX_STARTUP_HALVINGS: u32 = 60;

/// Launch data for one slit of a joint trace.
#[derive(Debug, Clone)]
pub struct MultiStart {
    /// Real point the slit leaves from.
    pub x: f64,
    /// Departure angle in (0, π).
    pub theta_dep: PiAngle,
}

/// Joint state of all driving values and marks.
#[derive(Debug, Clone)]
pub struct MultiState {
    pub t: f64,
    pub xis: Vec<f64>,
    /// Capacity weights, one per slit, summing to 1.
    pub weights: Vec<f64>,
    pub marks: Vec<Mark>,
    /// Conserved value of `2Σξ_l + Σ eᵢXᵢ`.
    pub sigma0: f64,
}

impl MultiState {
    /// `|2Σξ_l + Σ eᵢ Re Xᵢ − σ₀| + |Σ eᵢ Im Xᵢ|`.
    pub fn constraint_residual(&self) -> f64 {
        let mut acc = Complex64::zero();
        for m in &self.marks {
            acc += m.exponent_f64() * m.position;
        }
        let mut xsum = 0.0;
        for &xi in &self.xis {
            xsum += xi;
        }
        (2.0 * xsum + acc.re - self.sigma0).abs() + acc.im.abs()
    }

    /// Distance to the nearest singular encounter: every mark against every
    /// driving value, then the driving values pairwise.
    pub fn gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for &xi in &self.xis {
            for m in &self.marks {
                gap = gap.min((m.position - xi).norm());
            }
        }
        for (l, &a) in self.xis.iter().enumerate() {
            for &b in self.xis.iter().skip(l + 1) {
                gap = gap.min((a - b).abs());
            }
        }
        gap
    }
}

/// Instantaneous derivatives of the joint system.
#[derive(Debug, Clone)]
pub struct MultiDerivatives {
    pub xi_dots: Vec<f64>,
    /// Largest imaginary part left over by the mark sums.
    pub imag_residual: f64,
    pub mark_dots: Vec<Complex64>,
}

/// Right-hand side of the joint driving system.
pub fn multi_rhs(state: &MultiState) -> Result<MultiDerivatives> {
    let n = state.xis.len();
    let mut xi_dots = Vec::with_capacity(n);
    let mut imag: f64 = 0.0;
    for (l, &xi) in state.xis.iter().enumerate() {
        let mut drift = Complex64::zero();
        for m in &state.marks {
            let d = m.position - xi;
            if d.norm() == 0.0 {
                return Err(Error::Collision {
                    mark: m.position,
                    dist: 0.0,
                });
            }
            drift += m.exponent_f64() / d;
        }
        let mut inter = 0.0;
        for (k, &other) in state.xis.iter().enumerate() {
            if k == l {
                continue;
            }
            let d = xi - other;
            if d == 0.0 {
                return Err(Error::Collision {
                    mark: Complex64::new(other, 0.0),
                    dist: 0.0,
                });
            }
            inter += 2.0 * (state.weights[k] + state.weights[l]) / d;
        }
        imag = imag.max(drift.im.abs());
        xi_dots.push(inter - state.weights[l] * drift.re);
    }
    let mut mark_dots = Vec::with_capacity(state.marks.len());
    for m in &state.marks {
        let mut v = Complex64::zero();
        for (k, &xi) in state.xis.iter().enumerate() {
            v += 2.0 * state.weights[k] / (m.position - xi);
        }
        mark_dots.push(v);
    }
    Ok(MultiDerivatives {
        xi_dots,
        imag_residual: imag,
        mark_dots,
    })
}

/// One recorded state of a joint trace.
#[derive(Debug, Clone)]
pub struct MultiSample {
    pub t: f64,
    pub xis: Vec<f64>,
    /// Diagnostic; not part of the CSV schema.
    pub xi_dots: Vec<f64>,
    pub residual: f64,
    pub marks: Vec<(Complex64, Ratio<i64>)>,
}

#[derive(Debug, Clone)]
pub struct MultiResult {
    pub samples: Vec<MultiSample>,
    pub stop_reason: StopReason,
    pub state: MultiState,
    /// Total startup capacity actually used after halvings.
    pub startup: f64,
    /// Largest per-slit startup defect at that capacity.
    pub defect: f64,
}

/// Weld the initial pieces of all slits one at a time: slit `l` is removed by
/// an explicit tilted-slit map of capacity `b_l·s`, every existing mark and
/// every already-fixed driving value rides through that map, and the new
/// driving value is read off the conservation law with the earlier tips'
/// double zeros subtracted. Returns the joint state at capacity-time `s`
/// together with the largest per-slit defect.
fn joint_startup(
    qd: &FactorizedQD,
    starts: &[MultiStart],
    weights: &[f64],
    exponents: &[Ratio<i64>],
    sigma0: f64,
    s: f64,
    cfg: &RunConfig,
) -> Result<(MultiState, f64)> {
    let n = starts.len();
    // ambient factors become marks; each slit's own launch factor is tracked
    // so its weld can replace it by the base pair
    let mut marks: Vec<Mark> = Vec::new();
    let mut pending: Vec<Option<usize>> = vec![None; n];
    for f in &qd.factors {
        let owner = starts.iter().position(|st| {
            (f.location - Complex64::new(st.x, 0.0)).norm() <= 1e-12 * (1.0 + st.x.abs())
        });
        if let Some(l) = owner {
            pending[l] = Some(marks.len());
        }
        marks.push(Mark {
            position: f.location,
            exponent: f.exponent,
            role: if f.location.im == 0.0 {
                MarkRole::Boundary
            } else {
                MarkRole::Interior
            },
        });
    }
    // launch coordinates, pulled back through each successive weld
    let mut xs: Vec<f64> = starts.iter().map(|st| st.x).collect();
    let mut xis: Vec<f64> = Vec::with_capacity(n);
    let mut worst_defect: f64 = 0.0;
    for l in 0..n {
        let p = starts[l].theta_dep.radians() / std::f64::consts::PI;
        let mu = base_exponents(exponents[l], &starts[l].theta_dep)?;
        let cap = weights[l] * s;
        // the same map the weld below will build; constructed here first so
        // the earlier driving values and launch points can ride through it
        let map = TiltedSlitMap::make(p, xs[l], 2.0 * cap)?;
        for xi in xis.iter_mut() {
            let w = Complex64::new(*xi, 0.0);
            let z = map.invert(w, Some(w), cfg.tol_newton)?;
            if z.im.abs() > TOL_IMAG * (1.0 + z.re.abs()) {
                return Err(Error::SymmetryLoss(z.im.abs()));
            }
            *xi = z.re;
        }
        let mut sigma_l = sigma0;
        for &xi in &xis {
            sigma_l -= 2.0 * xi;
        }
        let prev: Vec<Mark> = marks
            .iter()
            .enumerate()
            .filter(|(j, _)| pending[l] != Some(*j))
            .map(|(_, m)| m.clone())
            .collect();
        let st = startup_state(&prev, xs[l], p, mu, sigma_l, cap, cfg)?;
        worst_defect = worst_defect.max(st.defect);
        // dropping the consumed factor shifts later launch indices down
        if let Some(j) = pending[l] {
            for slot in pending.iter_mut().skip(l + 1) {
                if let Some(jj) = slot {
                    if *jj > j {
                        *jj -= 1;
                    }
                }
            }
        }
        marks = st.marks;
        xis.push(st.xi);
        for x in xs.iter_mut().skip(l + 1) {
            let w = Complex64::new(*x, 0.0);
            let z = map.invert(w, Some(w), cfg.tol_newton)?;
            if z.im.abs() > TOL_IMAG * (1.0 + z.re.abs()) {
                return Err(Error::SymmetryLoss(z.im.abs()));
            }
            *x = z.re;
        }
    }
    Ok((
        MultiState {
            t: s,
            xis,
            weights: weights.to_vec(),
            marks,
            sigma0,
        },
        worst_defect,
    ))
}

/// Taylor coefficients of every driving value and mark in the step variable.
struct MultiSeries {
    xis: Vec<Series>,
    marks: Vec<Series>,
}

impl MultiSeries {
    fn xi_dot(&self, l: usize) -> f64 {
        self.xis[l].c[1].re
    }

    fn max_speed(&self) -> f64 {
        let seed = self
            .xis
            .iter()
            .map(|x| x.c[1].norm())
            .fold(0.0_f64, f64::max);
        self.marks
            .iter()
            .map(|m| m.c[1].norm())
            .fold(seed, f64::max)
    }
}

fn multi_series(state: &MultiState, order: usize) -> Result<MultiSeries> {
    let ns = state.xis.len();
    let nm = state.marks.len();
    let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
    let mut xis: Vec<Series> = state
        .xis
        .iter()
        .map(|&x| Series::constant(Complex64::new(x, 0.0), order))
        .collect();
    let mut marks: Vec<Series> = state
        .marks
        .iter()
        .map(|m| Series::constant(m.position, order))
        .collect();
    // mark-to-slit and slit-to-slit difference reciprocals; pairs are stored
    // for l < k and negated for the transpose
    let mut diffs = vec![vec![Series::zero(order); nm]; ns];
    let mut recips = vec![vec![Series::zero(order); nm]; ns];
    let mut pdiffs = vec![vec![Series::zero(order); ns]; ns];
    let mut precips = vec![vec![Series::zero(order); ns]; ns];
    for m in 0..order {
        for l in 0..ns {
            for i in 0..nm {
                diffs[l][i].c[m] = marks[i].c[m] - xis[l].c[m];
                if m == 0 && diffs[l][i].c[0].norm() == 0.0 {
                    return Err(Error::Collision {
                        mark: state.marks[i].position,
                        dist: 0.0,
                    });
                }
                recips[l][i].c[m] = series::recip_coeff(&diffs[l][i], &recips[l][i], m);
            }
            for k in l + 1..ns {
                pdiffs[l][k].c[m] = xis[l].c[m] - xis[k].c[m];
                if m == 0 && pdiffs[l][k].c[0].norm() == 0.0 {
                    return Err(Error::Collision {
                        mark: Complex64::new(state.xis[k], 0.0),
                        dist: 0.0,
                    });
                }
                precips[l][k].c[m] = series::recip_coeff(&pdiffs[l][k], &precips[l][k], m);
            }
        }
        let scale = 1.0 / (m as f64 + 1.0);
        for l in 0..ns {
            let mut drift = Complex64::zero();
            for i in 0..nm {
                drift += exps[i] * recips[l][i].c[m];
            }
            if m == 0 && drift.im.abs() > TOL_IMAG * (1.0 + drift.re.abs()) {
                return Err(Error::SymmetryLoss(drift.im.abs()));
            }
            let mut inter = Complex64::zero();
            for k in 0..ns {
                if k == l {
                    continue;
                }
                let r = if l < k {
                    precips[l][k].c[m]
                } else {
                    -precips[k][l].c[m]
                };
                inter += (2.0 * (state.weights[k] + state.weights[l])) * r;
            }
            xis[l].c[m + 1] =
                Complex64::new((inter.re - state.weights[l] * drift.re) * scale, 0.0);
        }
        for i in 0..nm {
            let mut v = Complex64::zero();
            for l in 0..ns {
                v += (2.0 * state.weights[l]) * recips[l][i].c[m];
            }
            marks[i].c[m + 1] = v * scale;
        }
    }
    Ok(MultiSeries { xis, marks })
}

/// Trace every slit jointly until capacity-time `t_end`.
///
/// Startup welds the slits one after another at capacities `b_l·s`, halving
/// the total `s` until the worst per-slit defect is within `tol_startup`;
/// the joint system is then stepped with the same ramped Taylor scheme as
/// the chordal tracer.
pub fn multi_trace(
    qd: &FactorizedQD,
    starts: &[MultiStart],
    weights: &[f64],
    t_end: f64,
    cfg: &RunConfig,
) -> Result<MultiResult> {
    cfg.validate()?;
    let n = starts.len();
    if n == 0 {
        return Err(Error::Invalid("no slits to trace".into()));
    }
    if weights.len() != n {
        return Err(Error::Invalid(format!(
            "{} weights for {} slits",
            weights.len(),
            n
        )));
    }
    if weights.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(Error::Invalid("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("weights sum to {total}, not 1")));
    }
    for (l, st) in starts.iter().enumerate() {
        let th = st.theta_dep.radians();
        if !(th > 0.0 && th < std::f64::consts::PI) {
            return Err(Error::Invalid(format!(
                "slit {l}: departure angle {th} outside (0, π)"
            )));
        }
        for other in starts.iter().skip(l + 1) {
            if (st.x - other.x).abs() <= 1e-9 * (1.0 + st.x.abs()) {
                return Err(Error::Invalid(format!(
                    "two slits launch from the same point {}",
                    st.x
                )));
            }
        }
    }
    // local exponents and the conserved value of the initial configuration
    let mut exponents = Vec::with_capacity(n);
    for st in starts {
        let here = Complex64::new(st.x, 0.0);
        let e = qd
            .factors
            .iter()
            .find(|f| (f.location - here).norm() <= 1e-12 * (1.0 + st.x.abs()))
            .map(|f| f.exponent)
            .unwrap_or_else(Ratio::zero);
        if e <= Ratio::new(-2, 1) {
            return Err(Error::Invalid(format!(
                "no slit can leave a point of exponent {e}"
            )));
        }
        exponents.push(e);
    }
    let mut sigma0 = 0.0;
    for (st, &e) in starts.iter().zip(&exponents) {
        sigma0 += ratio_f64(e) * st.x;
    }
    for f in &qd.factors {
        let consumed = starts.iter().any(|st| {
            (f.location - Complex64::new(st.x, 0.0)).norm() <= 1e-12 * (1.0 + st.x.abs())
        });
        if !consumed {
            sigma0 += ratio_f64(f.exponent) * f.location.re;
        }
    }
    // halve the total startup capacity until every weld is locally straight
    let mut s = cfg.startup;
    let mut built = None;
    let mut defect = f64::INFINITY;
    for _ in 0..=MAX_STARTUP_HALVINGS {
        let (state, d) = joint_startup(qd, starts, weights, &exponents, sigma0, s, cfg)?;
        defect = d;
        if d <= cfg.tol_startup {
            built = Some(state);
            break;
        }
        s *= 0.5;
    }
    let mut state = built.ok_or(Error::StartupTooCoarse {
        defect,
        tol: cfg.tol_startup,
    })?;
    if t_end <= state.t {
        return Err(Error::Invalid(format!(
            "capacity horizon {t_end} does not outlast the startup"
        )));
    }
    let mut samples = Vec::new();
    let mut steps_since_sample = 0usize;
    let mut record = |samples: &mut Vec<MultiSample>, state: &MultiState, force: bool| {
        steps_since_sample += 1;
        if !force && steps_since_sample < cfg.sample_stride {
            return;
        }
        steps_since_sample = 0;
        samples.push(MultiSample {
            t: state.t,
            xis: state.xis.clone(),
            xi_dots: multi_rhs(state)
                .map(|d| d.xi_dots)
                .unwrap_or_else(|_| vec![f64::NAN; state.xis.len()]),
            residual: state.constraint_residual(),
            marks: state
                .marks
                .iter()
                .map(|m| (m.position, m.exponent))
                .collect(),
        });
    };
    record(&mut samples, &state, true);
    loop {
        // a boundary mark closing in on some driving value heralds a tip
        // swallowing a stretch of the real line: stop gracefully.  Interior
        // marks and rival tips are genuine singularities and end the run hard.
        let mut nearest: Option<(MarkRole, Complex64, f64)> = None;
        for m in &state.marks {
            for &xi in &state.xis {
                let dist = (m.position - Complex64::new(xi, 0.0)).norm();
                if nearest.map_or(true, |(_, _, d)| dist < d) {
                    nearest = Some((m.role, m.position, dist));
                }
            }
        }
        if let Some((role, position, dist)) = nearest {
            if dist < cfg.tol_collision {
                if role.is_real() {
                    log::info!(
                        "loop guard fired at t={}: a driving value within {:.3e} of {}",
                        state.t,
                        dist,
                        position
                    );
                    record(&mut samples, &state, true);
                    return Ok(MultiResult {
                        samples,
                        stop_reason: StopReason::LoopDetected,
                        state,
                        startup: s,
                        defect,
                    });
                }
                return Err(Error::Collision {
                    mark: position,
                    dist,
                });
            }
        }
        for (l, &a) in state.xis.iter().enumerate() {
            for &b in state.xis.iter().skip(l + 1) {
                if (a - b).abs() < cfg.tol_collision {
                    return Err(Error::Collision {
                        mark: Complex64::new(b, 0.0),
                        dist: (a - b).abs(),
                    });
                }
            }
        }
        let series = multi_series(&state, cfg.order)?;
        if let Some(l) = (0..n).find(|&l| series.xi_dot(l).abs() >= cfg.loop_threshold) {
            log::info!(
                "loop guard fired at t={}: |ξ̇_{}|={:.3e}",
                state.t,
                l,
                series.xi_dot(l).abs()
            );
            record(&mut samples, &state, true);
            return Ok(MultiResult {
                samples,
                stop_reason: StopReason::LoopDetected,
                state,
                startup: s,
                defect,
            });
        }
        let gap = state.gap();
        let vmax = series.max_speed().max(1e-300);
        let h_safe = STEP_SAFETY * gap / vmax;
        let ramp = cfg.h * state.t / cfg.ramp;
        let mut h = cfg.h.min(ramp).min(h_safe);
        let mut capacity_hit = false;
        let remaining = t_end - state.t;
        if remaining <= h {
            h = remaining;
            capacity_hit = true;
        }
        if h < STEP_FLOOR {
            if capacity_hit {
                record(&mut samples, &state, true);
                return Ok(MultiResult {
                    samples,
                    stop_reason: StopReason::CapacityReached,
                    state,
                    startup: s,
                    defect,
                });
            }
            return Err(Error::StepTooLarge {
                h,
                horizon: h_safe,
                gap,
            });
        }
        state.t += h;
        for (xi, sx) in state.xis.iter_mut().zip(&series.xis) {
            *xi = sx.eval(h).re;
        }
        for (mark, sm) in state.marks.iter_mut().zip(&series.marks) {
            mark.position = sm.eval(h);
        }
        let residual = state.constraint_residual();
        if residual > cfg.tol_constraint {
            return Err(Error::ConstraintDrift {
                residual,
                tol: cfg.tol_constraint,
                t: state.t,
            });
        }
        if capacity_hit {
            record(&mut samples, &state, true);
            return Ok(MultiResult {
                samples,
                stop_reason: StopReason::CapacityReached,
                state,
                startup: s,
                defect,
            });
        }
        record(&mut samples, &state, false);
    }
}
