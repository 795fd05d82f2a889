//! Disc analogue of the chordal driving system.
//!
//! A slit grows from a point `e^{iξ0}` of the unit circle into the disc; the
//! uniformizing maps fix the origin and have positive derivative `e^{−t}`
//! there, which makes `t` the capacity clock. The mapped-out differential
//! keeps the factorized shape `R′·z^K·(z−E)²·∏(z−Xᵢ)^{eᵢ}` with `E = e^{iξ}`
//! the driving point, and the whole configuration obeys a first-order system:
//! writing `S(z) = (E+z)/(E−z)`,
//!
//! ```text
//!   i ξ' = −(3 + K + ½Σeᵢ) − ½ Σ eᵢ S(Xᵢ),      Xᵢ' = Xᵢ·S(Xᵢ),
//! ```
//!
//! and `log R′` grows at the constant real rate `4 + K + Σeᵢ`. The left-hand
//! side of the driving equation is `i` times a real number, so the real part
//! of the right-hand side must vanish; that happens exactly when the mark set
//! closes up under inversion in the circle (counting the origin power), and a
//! realness guard aborts the trace otherwise. Marks on the circle are stored
//! as angles and driven through the real form `α' = cot((α−ξ)/2)` — keeping
//! them unit-modulus by construction matters, because a rounding-level radial
//! displacement is amplified by the `1/gap²` stiffness near the base pair.
//!
//! The independent cross-check mirrors the half-plane oracle: each chord of a
//! polyline is welded away by a straight half-plane slit map conjugated by
//! the Möbius transplant that sends the disc to the upper half-plane, with a
//! disc automorphism restoring the normalization at the origin after every
//! weld. Capacities add as `−log` of the recentred derivatives.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use std::f64::consts::PI;

use crate::angle::{ratio_f64, PiAngle};
use crate::chordal::{base_exponents, StopReason, TOL_IMAG};
use crate::config::{RadialMode, RunConfig};
use crate::error::{Error, Result};
use crate::oracle::{orient, segments_cross, OracleSample};
use crate::qdiff::{self, FactorizedQD};
use crate::series::{self, Series};
use crate::slitmaps::TiltedSlitMap;

/// Fraction of the driving-point/mark gap a single step may cover.
const STEP_SAFETY: f64 = 0.1;
/// Steps below this are treated as a breakdown of the integration.
const STEP_FLOOR: f64 = 1e-15;
/// Maximum halvings of the startup capacity before giving up.
const MAX_STARTUP_HALVINGS: u32 = 60;
/// Allowed real leakage of `i·ξ'`, which is purely imaginary exactly when
/// the mark set closes under inversion in the circle.
const REALNESS_TOL: f64 = 1e-8;

/// Where a disc mark lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscMarkKind {
    /// On the unit circle, tracked by angle so the modulus stays exact.
    Circle { angle: f64 },
    /// Off the circle (inside or outside the disc), tracked as a position.
    Free { position: Complex64 },
}

/// Image of one marked point of the differential under the uniformizing maps.
#[derive(Debug, Clone)]
pub struct DiscMark {
    pub exponent: Ratio<i64>,
    pub kind: DiscMarkKind,
}

impl DiscMark {
    pub fn exponent_f64(&self) -> f64 {
        ratio_f64(self.exponent)
    }

    pub fn position(&self) -> Complex64 {
        match self.kind {
            DiscMarkKind::Circle { angle } => Complex64::from_polar(1.0, angle),
            DiscMarkKind::Free { position } => position,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.kind, DiscMarkKind::Circle { .. })
    }
}

/// Launch data for a disc trace.
#[derive(Debug, Clone)]
pub struct RadialStart {
    /// Angle of the circle point the slit leaves from.
    pub xi0: f64,
    /// Departure angle into the disc, measured from the forward tangent
    /// (π/2 = straight along the radius).
    pub theta_dep: PiAngle,
}

/// Full state of the disc driving system.
#[derive(Debug, Clone)]
pub struct RadialState {
    /// Capacity-time: the uniformizing map has derivative `e^{−t}` at 0.
    pub t: f64,
    /// Driving angle; the slit is absorbed at `e^{iξ}`.
    pub xi: f64,
    /// Exponent of the origin factor of the mapped-out differential.
    pub k_origin: Ratio<i64>,
    pub marks: Vec<DiscMark>,
    /// Logarithm of the running prefactor `R′`. Its imaginary part is frozen
    /// and only the real part (which grows linearly) feeds the tip speed.
    pub log_rp: Complex64,
    /// Physical tip of the slit traced so far.
    pub tip: Complex64,
    /// Unit tangent of the slit at the tip, pointing forward.
    pub tip_dir: Complex64,
    pub arclength: f64,
    pub qd: FactorizedQD,
    /// Trajectory phase of the arc being traced.
    pub phi: f64,
    /// Frozen `t = 0` value of the product side of the recorded invariant.
    pub pi0: Complex64,
}

impl RadialState {
    pub fn driving_point(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.xi)
    }

    fn mark_gap(&self, m: &DiscMark) -> f64 {
        match m.kind {
            DiscMarkKind::Circle { angle } => 2.0 * (0.5 * (angle - self.xi)).sin().abs(),
            DiscMarkKind::Free { position } => (position - self.driving_point()).norm(),
        }
    }

    /// Distance from the driving point to the nearest mark.
    pub fn gap(&self) -> f64 {
        self.marks
            .iter()
            .map(|m| self.mark_gap(m))
            .fold(f64::INFINITY, f64::min)
    }

    /// Real growth rate of `log R′`: `4 + K + Σeᵢ`, constant along the flow.
    pub fn log_rp_rate(&self) -> f64 {
        4.0 + ratio_f64(self.k_origin)
            + self.marks.iter().map(|m| m.exponent_f64()).sum::<f64>()
    }

    /// Mismatch of the recorded product-form invariant
    /// `e^{2iξ} = e^{−2t}·Π₀·∏ Xᵢ^{−eᵢ}`, as `(residual, modulus defect)`.
    /// Recorded for instrumentation only — the integrated flow does not
    /// conserve it, and nothing downstream enforces it.
    pub fn first_integral(&self) -> (f64, f64) {
        let lhs = Complex64::from_polar(1.0, 2.0 * self.xi);
        let mut rhs = (-2.0 * self.t).exp() * self.pi0;
        for m in &self.marks {
            rhs *= qdiff::pow_down(m.position(), -m.exponent_f64());
        }
        ((lhs - rhs).norm(), (rhs.norm() - 1.0).abs())
    }

    /// Growth speed of the physical tip, `2·|R′·∏(E−Xᵢ)^{eᵢ} / Q(γ)|^{1/2}`.
    pub fn tip_speed(&self) -> Result<f64> {
        let q = qdiff::evaluate(&self.qd, self.tip)?;
        if q.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "tip {} sits on a zero of the differential",
                self.tip
            )));
        }
        let mut log_mod = self.log_rp.re;
        for m in &self.marks {
            log_mod += m.exponent_f64() * self.mark_gap(m).ln();
        }
        Ok(2.0 * (0.5 * (log_mod - q.norm().ln())).exp())
    }
}

/// Instantaneous derivatives of the disc driving system.
#[derive(Debug, Clone)]
pub struct RadialDerivatives {
    pub xi_dot: f64,
    /// Absolute real part left over by `i·ξ'`; nonzero when the mark set
    /// does not close under inversion in the circle.
    pub realness_residual: f64,
    /// `Xᵢ·S(Xᵢ)` for each mark, in mark order.
    pub mark_dots: Vec<Complex64>,
    /// `d(log R′)/dt`, a real constant.
    pub log_rp_rate: f64,
}

/// Constant term and sum weight of `i·ξ'` under the selected right-hand side.
fn drift_constants(k_origin: Ratio<i64>, marks: &[DiscMark], mode: RadialMode) -> (f64, f64) {
    match mode {
        RadialMode::OriginMark => {
            let s_exp: f64 = marks.iter().map(|m| m.exponent_f64()).sum();
            (-(3.0 + ratio_f64(k_origin) + 0.5 * s_exp), -0.5)
        }
        RadialMode::AsPrinted => (-1.0, 0.5),
    }
}

/// Right-hand side of the disc driving system at the given state.
pub fn radial_rhs(state: &RadialState, mode: RadialMode) -> Result<RadialDerivatives> {
    let e = state.driving_point();
    let (c0, half) = drift_constants(state.k_origin, &state.marks, mode);
    let mut sum = Complex64::zero();
    let mut mark_dots = Vec::with_capacity(state.marks.len());
    for m in &state.marks {
        let s = match m.kind {
            DiscMarkKind::Circle { angle } => {
                let d = 0.5 * (angle - state.xi);
                let sn = d.sin();
                if sn == 0.0 {
                    return Err(Error::Collision {
                        mark: m.position(),
                        dist: 0.0,
                    });
                }
                Complex64::new(0.0, d.cos() / sn)
            }
            DiscMarkKind::Free { position } => {
                let diff = e - position;
                if diff.norm() == 0.0 {
                    return Err(Error::Collision {
                        mark: position,
                        dist: 0.0,
                    });
                }
                (e + position) / diff
            }
        };
        mark_dots.push(m.position() * s);
        sum += m.exponent_f64() * s;
    }
    let ixd = Complex64::new(c0, 0.0) + half * sum;
    Ok(RadialDerivatives {
        xi_dot: ixd.im,
        realness_residual: ixd.re.abs(),
        mark_dots,
        log_rp_rate: state.log_rp_rate(),
    })
}

/// Taylor coefficients of the driving angle and every mark in the step
/// variable τ. Circle marks carry the recurrence for `cot((α−ξ)/2)`, free
/// marks the reciprocal of `E − X`.
enum MarkSeries {
    Circle {
        angle: Series,
        cot: Series,
        one_plus_sq: Series,
    },
    Free {
        position: Series,
        diff: Series,
        recip: Series,
        weight: Series,
    },
}

struct RadialSeries {
    xi: Series,
    /// Series of the driving point `e^{iξ(τ)}`.
    e: Series,
    marks: Vec<MarkSeries>,
}

impl RadialSeries {
    fn xi_dot(&self) -> f64 {
        self.xi.c[1].re
    }

    fn max_speed(&self) -> f64 {
        self.marks
            .iter()
            .map(|m| match m {
                MarkSeries::Circle { angle, .. } => angle.c[1].norm(),
                MarkSeries::Free { position, .. } => position.c[1].norm(),
            })
            .fold(self.xi.c[1].norm(), f64::max)
    }
}

fn radial_series(state: &RadialState, order: usize, mode: RadialMode) -> Result<RadialSeries> {
    let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
    let (c0, half) = drift_constants(state.k_origin, &state.marks, mode);
    let mut xi = Series::constant(Complex64::new(state.xi, 0.0), order);
    // u = iξ, exponentiated coefficient by coefficient into e = e^{iξ}
    let mut u = Series::constant(Complex64::new(0.0, state.xi), order);
    let mut e = Series::zero(order);
    let mut marks: Vec<MarkSeries> = state
        .marks
        .iter()
        .map(|m| match m.kind {
            DiscMarkKind::Circle { angle } => MarkSeries::Circle {
                angle: Series::constant(Complex64::new(angle, 0.0), order),
                cot: Series::zero(order),
                one_plus_sq: Series::zero(order),
            },
            DiscMarkKind::Free { position } => MarkSeries::Free {
                position: Series::constant(position, order),
                diff: Series::zero(order),
                recip: Series::zero(order),
                weight: Series::zero(order),
            },
        })
        .collect();
    for m in 0..order {
        e.c[m] = series::exp_coeff(&u, &e, m);
        let mut sum = Complex64::zero();
        for (ms, (&ex, mark)) in marks.iter_mut().zip(exps.iter().zip(&state.marks)) {
            match ms {
                MarkSeries::Circle {
                    angle,
                    cot,
                    one_plus_sq,
                } => {
                    if m == 0 {
                        let d0 = 0.5 * (angle.c[0].re - xi.c[0].re);
                        let sn = d0.sin();
                        if sn == 0.0 {
                            return Err(Error::Collision {
                                mark: mark.position(),
                                dist: 0.0,
                            });
                        }
                        cot.c[0] = Complex64::new(d0.cos() / sn, 0.0);
                    } else {
                        // y = cot(d) obeys y' = −(1+y²)·d'
                        let mut acc = Complex64::zero();
                        for j in 0..m {
                            let d_mj = 0.5 * (angle.c[m - j] - xi.c[m - j]);
                            acc += one_plus_sq.c[j] * ((m - j) as f64) * d_mj;
                        }
                        cot.c[m] = -acc / m as f64;
                    }
                    let mut sq = cot.mul_coeff(cot, m);
                    if m == 0 {
                        sq += Complex64::new(1.0, 0.0);
                    }
                    one_plus_sq.c[m] = sq;
                    // S(X) = i·cot((α−ξ)/2) on the circle
                    sum += ex * Complex64::new(0.0, 1.0) * cot.c[m];
                }
                MarkSeries::Free {
                    position,
                    diff,
                    recip,
                    weight,
                } => {
                    diff.c[m] = e.c[m] - position.c[m];
                    if m == 0 && diff.c[0].norm() == 0.0 {
                        return Err(Error::Collision {
                            mark: mark.position(),
                            dist: 0.0,
                        });
                    }
                    recip.c[m] = series::recip_coeff(diff, recip, m);
                    let mut acc = Complex64::zero();
                    for j in 0..=m {
                        acc += (e.c[j] + position.c[j]) * recip.c[m - j];
                    }
                    weight.c[m] = acc;
                    sum += ex * weight.c[m];
                }
            }
        }
        let mut ixd = half * sum;
        if m == 0 {
            ixd += Complex64::new(c0, 0.0);
            if ixd.re.abs() > REALNESS_TOL {
                return Err(Error::SymmetryLoss(ixd.re.abs()));
            }
        }
        let scale = 1.0 / (m as f64 + 1.0);
        xi.c[m + 1] = Complex64::new(ixd.im * scale, 0.0);
        u.c[m + 1] = Complex64::new(0.0, ixd.im * scale);
        for ms in marks.iter_mut() {
            match ms {
                MarkSeries::Circle { angle, cot, .. } => {
                    angle.c[m + 1] = cot.c[m] * scale;
                }
                MarkSeries::Free {
                    position, weight, ..
                } => {
                    position.c[m + 1] = position.mul_coeff(weight, m) * scale;
                }
            }
        }
    }
    Ok(RadialSeries { xi, e, marks })
}

/// Growth velocity of the physical tip at the current state: speed from the
/// mark distances, direction from the trajectory tangent nearest the stored
/// tip direction.
pub fn radial_tip_velocity(state: &RadialState) -> Result<Complex64> {
    let speed = state.tip_speed()?;
    let (a, b) = qdiff::trajectory_tangents(&state.qd, state.tip, state.phi)?;
    let dir = if (a * state.tip_dir.conj()).re >= 0.0 {
        a
    } else {
        b
    };
    Ok(speed * dir)
}

/// Tip velocity at step offset τ on top of the dense output of the driving
/// system; `log R′` is advanced by its constant rate.
#[allow(clippy::too_many_arguments)]
fn radial_tip_velocity_dense(
    qd: &FactorizedQD,
    phi: f64,
    exps: &[f64],
    series: &RadialSeries,
    log_rp_re: f64,
    rate: f64,
    tau: f64,
    gamma: Complex64,
    reference: Complex64,
) -> Result<Complex64> {
    let xi_tau = series.xi.eval(tau).re;
    let e_tau = series.e.eval(tau);
    let mut log_mod = log_rp_re + rate * tau;
    for (i, ms) in series.marks.iter().enumerate() {
        let dist = match ms {
            MarkSeries::Circle { angle, .. } => {
                2.0 * (0.5 * (angle.eval(tau).re - xi_tau)).sin().abs()
            }
            MarkSeries::Free { position, .. } => (e_tau - position.eval(tau)).norm(),
        };
        log_mod += exps[i] * dist.ln();
    }
    let q = qdiff::evaluate(qd, gamma)?;
    if q.norm() == 0.0 {
        return Err(Error::Degenerate(format!(
            "tip {gamma} reached a zero of the differential"
        )));
    }
    let speed = 2.0 * (0.5 * (log_mod - q.norm().ln())).exp();
    let (a, b) = qdiff::trajectory_tangents(qd, gamma, phi)?;
    let dir = if (a * reference.conj()).re >= 0.0 { a } else { b };
    Ok(speed * dir)
}

/// One Runge–Kutta pass for the tip and arclength over `[0, tau]`.
fn radial_tip_step(
    state: &RadialState,
    series: &RadialSeries,
    exps: &[f64],
    tau: f64,
) -> Result<(Complex64, f64, Complex64)> {
    let qd = &state.qd;
    let phi = state.phi;
    let reference = state.tip_dir;
    let lr = state.log_rp.re;
    let rate = state.log_rp_rate();
    let k1 = radial_tip_velocity_dense(qd, phi, exps, series, lr, rate, 0.0, state.tip, reference)?;
    let k2 = radial_tip_velocity_dense(
        qd,
        phi,
        exps,
        series,
        lr,
        rate,
        0.5 * tau,
        state.tip + 0.5 * tau * k1,
        reference,
    )?;
    let k3 = radial_tip_velocity_dense(
        qd,
        phi,
        exps,
        series,
        lr,
        rate,
        0.5 * tau,
        state.tip + 0.5 * tau * k2,
        reference,
    )?;
    let k4 = radial_tip_velocity_dense(
        qd,
        phi,
        exps,
        series,
        lr,
        rate,
        tau,
        state.tip + tau * k3,
        reference,
    )?;
    let tip = state.tip + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let dlen = tau / 6.0 * (k1.norm() + 2.0 * k2.norm() + 2.0 * k3.norm() + k4.norm());
    let dir_end =
        radial_tip_velocity_dense(qd, phi, exps, series, lr, rate, tau, tip, reference)?;
    Ok((tip, dlen, dir_end / dir_end.norm()))
}

// --- Möbius transplant between the disc and the upper half-plane ---------
//
// `T` sends the disc to the upper half-plane with the circle touch point
// `e0 ↦ 0` and the center `0 ↦ i`; straight slit excisions are performed on
// the half-plane side and conjugated back.

fn t_fwd(e0: Complex64, z: Complex64) -> Complex64 {
    Complex64::i() * (e0 - z) / (e0 + z)
}

fn t_inv(e0: Complex64, zeta: Complex64) -> Complex64 {
    e0 * (Complex64::i() - zeta) / (Complex64::i() + zeta)
}

fn t_der(e0: Complex64, z: Complex64) -> Complex64 {
    let d = e0 + z;
    -2.0 * Complex64::i() * e0 / (d * d)
}

fn t_inv_der(e0: Complex64, zeta: Complex64) -> Complex64 {
    let d = Complex64::i() + zeta;
    -2.0 * Complex64::i() * e0 / (d * d)
}

/// Disc automorphism data recentring the raw removal `z ↦ T⁻¹(map⁻¹(T z))`,
/// which moves the origin to `z0`. Composing with `ainv` restores the
/// normalization; the recentred derivative at 0 is the real `fp0 ∈ (0, 1)`
/// of the slit-growing direction, so the weld absorbs capacity `−log fp0`.
#[derive(Debug, Clone)]
struct Recentring {
    z0: Complex64,
    /// Unimodular twist making the recentred derivative positive.
    eta: Complex64,
    fp0: f64,
}

fn recentring(e0: Complex64, map: &TiltedSlitMap, tol: f64) -> Result<Recentring> {
    let i_pt = Complex64::i();
    let w0 = map.invert(i_pt, Some(i_pt), tol)?;
    let z0 = t_inv(e0, w0);
    let u = t_inv_der(e0, i_pt) * map.derivative(w0) * t_der(e0, z0);
    let fp0 = u.norm() * (1.0 - z0.norm_sqr());
    if !(fp0 > 0.0 && fp0 < 1.0) {
        return Err(Error::Degenerate(format!(
            "weld derivative {fp0} outside (0,1); the chord could not be absorbed"
        )));
    }
    Ok(Recentring {
        z0,
        eta: u.conj() / u.norm(),
        fp0,
    })
}

impl Recentring {
    /// Automorphism with `amap(0) = z0`: clean coordinates to raw ones.
    fn amap(&self, z: Complex64) -> Complex64 {
        let v = self.eta * z;
        (v + self.z0) / (1.0 + self.z0.conj() * v)
    }

    fn amap_der(&self, z: Complex64) -> Complex64 {
        let d = 1.0 + self.z0.conj() * self.eta * z;
        self.eta * (1.0 - self.z0.norm_sqr()) / (d * d)
    }

    fn ainv(&self, w: Complex64) -> Complex64 {
        self.eta.conj() * (w - self.z0) / (1.0 - self.z0.conj() * w)
    }

    fn dt(&self) -> f64 {
        -self.fp0.ln()
    }
}

// --- startup -------------------------------------------------------------

struct DiscStartup {
    t: f64,
    xi: f64,
    marks: Vec<DiscMark>,
    log_rp: Complex64,
    tip: Complex64,
    tip_dir: Complex64,
    defect: f64,
}

/// Pull one spectator mark back through the startup weld. Circle marks ride
/// along the boundary (transplanted to the real line, flattened against
/// rounding), free marks through the interior or exterior; the transplant
/// pole at the antipode is fixed by the raw removal and handled exactly.
fn pull_spectator(
    m: &DiscMark,
    e0: Complex64,
    map: &TiltedSlitMap,
    rec: &Recentring,
    tol: f64,
) -> Result<DiscMark> {
    match m.kind {
        DiscMarkKind::Circle { angle } => {
            let pos = Complex64::from_polar(1.0, angle);
            let pulled = if (pos + e0).norm() <= 1e-9 {
                rec.ainv(-e0)
            } else {
                let zeta = t_fwd(e0, pos);
                if zeta.im.abs() > TOL_IMAG * (1.0 + zeta.re.abs()) {
                    return Err(Error::SymmetryLoss(zeta.im.abs()));
                }
                let zeta = Complex64::new(zeta.re, 0.0);
                let w = map.invert(zeta, Some(zeta), tol)?;
                if w.im.abs() > TOL_IMAG * (1.0 + w.re.abs()) {
                    return Err(Error::SymmetryLoss(w.im.abs()));
                }
                rec.ainv(t_inv(e0, Complex64::new(w.re, 0.0)))
            };
            let raw = pulled.arg();
            Ok(DiscMark {
                exponent: m.exponent,
                kind: DiscMarkKind::Circle {
                    angle: raw + 2.0 * PI * ((angle - raw) / (2.0 * PI)).round(),
                },
            })
        }
        DiscMarkKind::Free { position } => {
            let zeta = t_fwd(e0, position);
            // exterior points transplant to the lower half-plane; the slit
            // map has real coefficients, so invert a conjugate there
            let w = if zeta.im < 0.0 {
                map.invert(zeta.conj(), Some(zeta.conj()), tol)?.conj()
            } else {
                map.invert(zeta, Some(zeta), tol)?
            };
            Ok(DiscMark {
                exponent: m.exponent,
                kind: DiscMarkKind::Free {
                    position: rec.ainv(t_inv(e0, w)),
                },
            })
        }
    }
}

/// Two interior reference points for the prefactor fit, clear of every mark,
/// of the downward branch rays hanging from marks and factors, and of the
/// ray from the origin power.
fn choose_probes(
    qd: &FactorizedQD,
    marks: &[DiscMark],
    xi0: f64,
) -> Result<(Complex64, Complex64)> {
    const RADIUS: f64 = 0.37;
    const CLEAR: f64 = 0.12;
    let mut occupied: Vec<Complex64> = marks.iter().map(|m| m.position()).collect();
    occupied.extend(
        qd.factors
            .iter()
            .map(|f| f.location)
            .filter(|l| l.norm() > 1e-12),
    );
    let clear_of_axis = |z: Complex64| {
        let d = (z.arg() + 0.5 * PI).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d) > 0.15
    };
    for k in 0..8 {
        let psi = xi0 + PI + 0.9 * k as f64;
        let za = Complex64::from_polar(RADIUS, psi);
        let zb = Complex64::from_polar(RADIUS, psi + 0.11);
        if !clear_of_axis(za) || !clear_of_axis(zb) {
            continue;
        }
        let lo = za.re.min(zb.re);
        let hi = za.re.max(zb.re);
        let min_im = za.im.min(zb.im);
        let blocked = occupied.iter().any(|x| {
            (za - x).norm() < CLEAR
                || (zb - x).norm() < CLEAR
                || (x.re > lo && x.re < hi && x.im > min_im - CLEAR)
        });
        if !blocked {
            return Ok((za, zb));
        }
    }
    Err(Error::Degenerate(
        "no reference points clear of the singular rays".into(),
    ))
}

/// Build the post-startup state of a disc trace: approximate the first piece
/// of the slit by the transplant of a straight half-plane slit of capacity
/// `2s`, pull every spectator through it, place the base pair and driving
/// angle from the slit-map landmarks, and fit the prefactor `R′` at two
/// reference points. Their disagreement is the startup defect; it vanishes
/// exactly when the arc really is the transplanted straight slit.
#[allow(clippy::too_many_arguments)]
fn startup_disc(
    qd: &FactorizedQD,
    spectators: &[DiscMark],
    k_origin: Ratio<i64>,
    xi0: f64,
    p: f64,
    mu: (Ratio<i64>, Ratio<i64>),
    s: f64,
    cfg: &RunConfig,
) -> Result<DiscStartup> {
    let e0 = Complex64::from_polar(1.0, xi0);
    let map = TiltedSlitMap::make(p, 0.0, 2.0 * s)?;
    let rec = recentring(e0, &map, cfg.tol_newton)?;
    let mut marks = Vec::with_capacity(spectators.len() + 2);
    for m in spectators {
        marks.push(pull_spectator(m, e0, &map, &rec, cfg.tol_newton)?);
    }
    let (cm, tip_pre, cp) = map.landmarks();
    let pull_angle = |q: f64| -> f64 {
        let raw = rec.ainv(t_inv(e0, Complex64::new(q, 0.0))).arg();
        raw + 2.0 * PI * ((xi0 - raw) / (2.0 * PI)).round()
    };
    let a_minus = pull_angle(cm);
    let a_plus = pull_angle(cp);
    let xi = pull_angle(tip_pre);
    marks.push(DiscMark {
        exponent: mu.1,
        kind: DiscMarkKind::Circle { angle: a_minus },
    });
    marks.push(DiscMark {
        exponent: mu.0,
        kind: DiscMarkKind::Circle { angle: a_plus },
    });
    let w_tip = map.tip();
    let tip = t_inv(e0, w_tip);
    let dir_raw = t_inv_der(e0, w_tip) * Complex64::from_polar(1.0, PI * p);
    let e_new = Complex64::from_polar(1.0, xi);
    let k_f = ratio_f64(k_origin);
    let model = |z: Complex64| -> Complex64 {
        let d = z - e_new;
        let mut q = qdiff::pow_down(z, k_f) * d * d;
        for m in &marks {
            q *= qdiff::pow_down(z - m.position(), m.exponent_f64());
        }
        q
    };
    let ratio_at = |z: Complex64| -> Result<Complex64> {
        let az = rec.amap(z);
        let w = t_fwd(e0, az);
        let f = t_inv(e0, map.apply(w));
        let der = t_inv_der(e0, map.apply(w)) * map.derivative(w) * t_der(e0, az)
            * rec.amap_der(z);
        let q = qdiff::evaluate(qd, f)?;
        let m = model(z);
        if m.norm() == 0.0 || !m.is_finite() {
            return Err(Error::Degenerate(format!(
                "reference point {z} landed on the model's singular set"
            )));
        }
        Ok(q * der * der / m)
    };
    let (za, zb) = choose_probes(qd, &marks, xi0)?;
    let ra = ratio_at(za)?;
    let rb = ratio_at(zb)?;
    if !(ra.norm() > 0.0) || !ra.is_finite() || !rb.is_finite() {
        return Err(Error::Degenerate(
            "prefactor reference degenerated during startup".into(),
        ));
    }
    Ok(DiscStartup {
        t: rec.dt(),
        xi,
        marks,
        log_rp: Complex64::new(ra.norm().ln(), ra.arg()),
        tip,
        tip_dir: dir_raw / dir_raw.norm(),
        defect: (rb / ra - Complex64::new(1.0, 0.0)).norm(),
    })
}

/// Run `startup_disc`, halving `s` until the defect is within tolerance.
#[allow(clippy::too_many_arguments)]
fn converged_startup_disc(
    qd: &FactorizedQD,
    spectators: &[DiscMark],
    k_origin: Ratio<i64>,
    xi0: f64,
    p: f64,
    mu: (Ratio<i64>, Ratio<i64>),
    cfg: &RunConfig,
) -> Result<(DiscStartup, f64)> {
    let mut s = cfg.startup;
    let mut last_defect = f64::INFINITY;
    for _ in 0..=MAX_STARTUP_HALVINGS {
        let st = startup_disc(qd, spectators, k_origin, xi0, p, mu, s, cfg)?;
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

/// Classify the factors of the differential around a launch at `e^{iξ0}` and
/// build the initial state. Returns the state together with the startup
/// capacity actually used and its defect.
fn init_radial(
    qd: &FactorizedQD,
    start: &RadialStart,
    cfg: &RunConfig,
) -> Result<(RadialState, f64, f64)> {
    let theta = start.theta_dep.radians();
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::Invalid(format!(
            "departure angle {theta} outside (0, π)"
        )));
    }
    if !start.xi0.is_finite() {
        return Err(Error::Invalid(format!(
            "launch angle {} is not finite",
            start.xi0
        )));
    }
    let xi0 = start.xi0;
    let e0 = Complex64::from_polar(1.0, xi0);
    let mut k_origin = Ratio::zero();
    let mut launch = None;
    let mut spectators: Vec<DiscMark> = Vec::new();
    for f in &qd.factors {
        if f.location.norm() <= 1e-12 {
            k_origin = f.exponent;
        } else if (f.location - e0).norm() <= 1e-9 {
            launch = Some(f);
        } else if (f.location.norm() - 1.0).abs() <= 1e-9 {
            spectators.push(DiscMark {
                exponent: f.exponent,
                kind: DiscMarkKind::Circle {
                    angle: f.location.arg(),
                },
            });
        } else {
            spectators.push(DiscMark {
                exponent: f.exponent,
                kind: DiscMarkKind::Free {
                    position: f.location,
                },
            });
        }
    }
    let n = launch.map(|f| f.exponent).unwrap_or_else(Ratio::zero);
    if n <= Ratio::new(-2, 1) {
        return Err(Error::Invalid(format!(
            "no slit can leave a point of exponent {n}"
        )));
    }
    let a_n = match launch {
        Some(f) => qdiff::evaluate_without(qd, e0, f.location)?,
        None => qdiff::evaluate(qd, e0)?,
    };
    if a_n.norm() == 0.0 {
        return Err(Error::Degenerate(format!(
            "differential vanishes identically at the launch angle {xi0}"
        )));
    }
    // phase: arg a_N + (N+2)·arg d = 2φ with departure direction d = i·e0·e^{iθ}
    let phi = (0.5 * qdiff::arg_down(a_n)
        + (ratio_f64(n) + 2.0) * 0.5 * (xi0 + 0.5 * PI + theta))
        .rem_euclid(PI);
    let mu = base_exponents(n, &start.theta_dep)?;
    let p = theta / PI;
    let (st, s_used) = converged_startup_disc(qd, &spectators, k_origin, xi0, p, mu, cfg)?;
    let mut pi0 = qdiff::pow_down(e0, ratio_f64(n));
    for sp in &spectators {
        pi0 *= qdiff::pow_down(sp.position(), sp.exponent_f64());
    }
    let state = RadialState {
        t: st.t,
        xi: st.xi,
        k_origin,
        marks: st.marks,
        log_rp: st.log_rp,
        tip: st.tip,
        tip_dir: st.tip_dir,
        arclength: (st.tip - e0).norm(),
        qd: qd.clone(),
        phi,
        pi0,
    };
    Ok((state, s_used, st.defect))
}

// --- the trace -----------------------------------------------------------

/// One recorded state of a disc trace.
#[derive(Debug, Clone)]
pub struct RadialSample {
    pub t: f64,
    pub xi: f64,
    pub tip: Complex64,
    /// Mismatch of the recorded product-form invariant (instrumentation).
    pub residual: f64,
    /// Modulus part of the same mismatch.
    pub modulus_defect: f64,
    /// Driving velocity at this state (diagnostic; not part of the CSV schema).
    pub xi_dot: f64,
    pub marks: Vec<(Complex64, Ratio<i64>)>,
}

/// Everything a disc trace produced.
#[derive(Debug, Clone)]
pub struct RadialResult {
    pub samples: Vec<RadialSample>,
    pub stop_reason: StopReason,
    pub state: RadialState,
    /// Startup capacity actually used (after halvings).
    pub startup: f64,
    /// Startup defect at that capacity.
    pub defect: f64,
}

impl RadialResult {
    /// The samples as `(capacity-time, driving angle)` pairs.
    pub fn driving(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.xi)).collect()
    }
}

struct RadialRun {
    cfg: RunConfig,
    state: RadialState,
    samples: Vec<RadialSample>,
    steps_since_sample: usize,
}

impl RadialRun {
    fn run(&mut self, t_end: f64) -> Result<StopReason> {
        let order = self.cfg.order;
        loop {
            let state = &self.state;
            // A circle mark closing in on the driving angle heralds the tip
            // swallowing a stretch of the circle: stop gracefully. Free
            // marks are genuine singularities and end the run hard.
            let nearest = state
                .marks
                .iter()
                .map(|m| (m.is_circle(), m.position(), state.mark_gap(m)))
                .min_by(|a, b| a.2.total_cmp(&b.2));
            if let Some((on_circle, position, dist)) = nearest {
                if dist < self.cfg.tol_collision {
                    if on_circle {
                        log::info!(
                            "loop guard fired at t={}: driving angle within {:.3e} of {}",
                            state.t,
                            dist,
                            position
                        );
                        self.record_sample(true);
                        return Ok(StopReason::LoopDetected);
                    }
                    return Err(Error::Collision {
                        mark: position,
                        dist,
                    });
                }
            }
            let exps: Vec<f64> = state.marks.iter().map(|m| m.exponent_f64()).collect();
            let series = radial_series(state, order, self.cfg.radial_mode)?;
            if series.xi_dot().abs() >= self.cfg.loop_threshold {
                log::info!(
                    "loop guard fired at t={}: |ξ'|={:.3e}",
                    state.t,
                    series.xi_dot().abs()
                );
                self.record_sample(true);
                return Ok(StopReason::LoopDetected);
            }
            let gap = state.gap();
            let vmax = series.max_speed().max(1e-300);
            let h_safe = STEP_SAFETY * gap / vmax;
            let ramp = self.cfg.h * self.state.t / self.cfg.ramp;
            let mut h = self.cfg.h.min(ramp).min(h_safe);
            let mut capacity_hit = false;
            let remaining = t_end - self.state.t;
            if remaining <= h {
                h = remaining;
                capacity_hit = true;
            }
            if h < STEP_FLOOR {
                if capacity_hit {
                    self.record_sample(true);
                    return Ok(StopReason::CapacityReached);
                }
                return Err(Error::StepTooLarge {
                    h,
                    horizon: h_safe,
                    gap,
                });
            }
            let (tip, dlen, dir) = radial_tip_step(&self.state, &series, &exps, h)?;
            self.commit(&series, h, tip, dlen, dir);
            if capacity_hit {
                self.record_sample(true);
                return Ok(StopReason::CapacityReached);
            }
            self.record_sample(false);
        }
    }

    /// Advance the state to step offset τ of the current series. There is no
    /// conserved quantity to enforce here; the recorded invariant ends up in
    /// the samples as instrumentation instead.
    fn commit(&mut self, series: &RadialSeries, tau: f64, tip: Complex64, dlen: f64, dir: Complex64) {
        let state = &mut self.state;
        state.t += tau;
        state.xi = series.xi.eval(tau).re;
        for (mark, s) in state.marks.iter_mut().zip(&series.marks) {
            match (&mut mark.kind, s) {
                (DiscMarkKind::Circle { angle }, MarkSeries::Circle { angle: a, .. }) => {
                    *angle = a.eval(tau).re;
                }
                (DiscMarkKind::Free { position }, MarkSeries::Free { position: p, .. }) => {
                    *position = p.eval(tau);
                }
                _ => unreachable!("mark kinds never change along the flow"),
            }
        }
        state.log_rp += Complex64::new(state.log_rp_rate() * tau, 0.0);
        state.tip = tip;
        state.tip_dir = dir;
        state.arclength += dlen;
    }

    fn record_sample(&mut self, force: bool) {
        self.steps_since_sample += 1;
        if !force && self.steps_since_sample < self.cfg.sample_stride {
            return;
        }
        self.steps_since_sample = 0;
        let state = &self.state;
        let (residual, modulus_defect) = state.first_integral();
        self.samples.push(RadialSample {
            t: state.t,
            xi: state.xi,
            tip: state.tip,
            residual,
            modulus_defect,
            xi_dot: radial_rhs(state, self.cfg.radial_mode)
                .map(|d| d.xi_dot)
                .unwrap_or(f64::NAN),
            marks: state
                .marks
                .iter()
                .map(|m| (m.position(), m.exponent))
                .collect(),
        });
    }
}

/// Trace the disc driving system from a circle launch until the capacity
/// budget is spent or a guard fires.
pub fn radial_trace(
    qd: &FactorizedQD,
    start: &RadialStart,
    t_end: f64,
    cfg: &RunConfig,
) -> Result<RadialResult> {
    cfg.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Invalid(format!(
            "capacity budget {t_end} must be positive"
        )));
    }
    let (state, s_used, defect) = init_radial(qd, start, cfg)?;
    if t_end <= state.t {
        return Err(Error::Invalid(format!(
            "capacity budget {t_end} does not outlast the startup"
        )));
    }
    let mut run = RadialRun {
        cfg: cfg.clone(),
        state,
        samples: Vec::new(),
        steps_since_sample: 0,
    };
    run.record_sample(true);
    let reason = run.run(t_end)?;
    Ok(RadialResult {
        samples: run.samples,
        stop_reason: reason,
        state: run.state,
        startup: s_used,
        defect,
    })
}

// --- welding oracle ------------------------------------------------------

/// Reject vertex lists that cannot bound a growing simple slit in the disc:
/// the first vertex must sit on the circle, every later vertex strictly
/// inside and away from the origin, edges must have positive length, and no
/// two edges may cross.
pub fn validate_disc_polyline(vertices: &[Complex64]) -> Result<()> {
    if vertices.len() < 2 {
        return Err(Error::BadPath("need at least two vertices".into()));
    }
    if (vertices[0].norm() - 1.0).abs() > 1e-9 {
        return Err(Error::BadPath(format!(
            "first vertex {} must sit on the unit circle",
            vertices[0]
        )));
    }
    for (k, v) in vertices.iter().enumerate().skip(1) {
        if !(v.norm() < 1.0 - 1e-12) {
            return Err(Error::BadPath(format!(
                "vertex {k} at {v} must lie strictly inside the disc"
            )));
        }
        if v.norm() < 1e-9 {
            return Err(Error::BadPath(format!(
                "vertex {k} at {v} collides with the normalization point 0"
            )));
        }
    }
    for w in vertices.windows(2) {
        if (w[1] - w[0]).norm() == 0.0 {
            return Err(Error::BadPath("zero-length edge".into()));
        }
    }
    // consecutive edges are exempt from the crossing scan below, so catch
    // the one way they can overlap: an exact reversal
    for (k, w) in vertices.windows(3).enumerate() {
        let d1 = w[1] - w[0];
        let d2 = w[2] - w[1];
        if orient(w[0], w[1], w[2]) == 0.0 && d1.re * d2.re + d1.im * d2.im < 0.0 {
            return Err(Error::BadPath(format!(
                "path doubles back on itself at vertex {}",
                k + 1
            )));
        }
    }
    for i in 0..vertices.len() - 1 {
        for j in i + 2..vertices.len() - 1 {
            if segments_cross(
                vertices[i],
                vertices[i + 1],
                vertices[j],
                vertices[j + 1],
                j == i + 2,
            ) {
                return Err(Error::BadPath(format!(
                    "edges {i} and {j} intersect; the slit must be simple"
                )));
            }
        }
    }
    Ok(())
}

/// One welded chord of the disc oracle: a straight half-plane slit excision
/// conjugated by the transplant at the pre-weld driving point, recentred at
/// the origin.
#[derive(Debug, Clone)]
pub struct DiscWeld {
    e0: Complex64,
    map: TiltedSlitMap,
    rec: Recentring,
    /// Capacity absorbed by this weld.
    pub dt: f64,
    /// Driving angle after this weld.
    pub beta: f64,
}

impl DiscWeld {
    /// Remove this weld's chord. `guess` is the expected output (the pull of
    /// a neighbouring point), used to seed the Newton inversion.
    fn pull(&self, z: Complex64, guess: Option<Complex64>, tol: f64) -> Result<Complex64> {
        let w = t_fwd(self.e0, z);
        let seed = guess.map(|g| t_fwd(self.e0, self.rec.amap(g))).unwrap_or(w);
        let v = self.map.invert(w, Some(seed), tol)?;
        Ok(self.rec.ainv(t_inv(self.e0, v)))
    }

    /// Grow this weld's chord back.
    fn push(&self, z: Complex64) -> Complex64 {
        t_inv(self.e0, self.map.apply(t_fwd(self.e0, self.rec.amap(z))))
    }
}

/// What the disc welding produced. The samples reuse the half-plane oracle's
/// record shape, with the driving value holding the driving angle.
#[derive(Debug, Clone)]
pub struct RadialOracleResult {
    pub samples: Vec<OracleSample>,
    /// Capacity-time at which each original vertex was absorbed.
    pub vertex_times: Vec<f64>,
    /// The welds, outermost first.
    pub welds: Vec<DiscWeld>,
}

impl RadialOracleResult {
    /// The samples as `(capacity-time, driving angle)` pairs.
    pub fn driving(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.xi)).collect()
    }
}

/// Weld a polyline slit in the disc away chord by chord and record the
/// driving angle. Chords cluster at edge ends exactly as in the half-plane
/// oracle, and every weld is checked by growing the configuration back and
/// measuring the miss at the chord endpoint.
pub fn disc_polyline_driving(
    vertices: &[Complex64],
    n_subdiv: usize,
    tol: f64,
) -> Result<RadialOracleResult> {
    validate_disc_polyline(vertices)?;
    if n_subdiv == 0 {
        return Err(Error::Invalid("n_subdiv must be at least 1".into()));
    }
    let mut beta = vertices[0].arg();
    let mut welds: Vec<DiscWeld> = Vec::new();
    let mut t = 0.0;
    let mut samples = vec![OracleSample {
        t: 0.0,
        xi: beta,
        gamma: vertices[0],
        arclength: 0.0,
        residual: 0.0,
    }];
    let mut vertex_times = vec![0.0];
    let mut prev_stages: Vec<Complex64> = vec![vertices[0]];
    let mut len_before = 0.0;
    for edge in vertices.windows(2) {
        let edge_len = (edge[1] - edge[0]).norm();
        for k in 1..=n_subdiv {
            let frac = 0.5 * (1.0 - (PI * k as f64 / n_subdiv as f64).cos());
            let target = edge[0] + frac * (edge[1] - edge[0]);
            let mut z = target;
            let mut stages = Vec::with_capacity(welds.len() + 1);
            stages.push(z);
            for (j, weld) in welds.iter().enumerate() {
                z = weld.pull(z, prev_stages.get(j + 1).copied(), tol)?;
                stages.push(z);
            }
            if !(z.norm() < 1.0) {
                return Err(Error::BadPath(format!(
                    "chord endpoint {target} pulls back outside the disc; refine the subdivision"
                )));
            }
            let e0 = Complex64::from_polar(1.0, beta);
            let zeta = t_fwd(e0, z);
            if !(zeta.im > 0.0) {
                return Err(Error::BadPath(format!(
                    "chord endpoint {target} transplants below the line; refine the subdivision"
                )));
            }
            let p = zeta.arg() / PI;
            if !(p > 1e-9 && p < 1.0 - 1e-9) {
                return Err(Error::Degenerate(format!(
                    "chord direction collapses onto the circle (p = {p})"
                )));
            }
            let map = TiltedSlitMap::make_reaching(p, 0.0, zeta.norm())?;
            let rec = recentring(e0, &map, tol)?;
            let raw = rec
                .ainv(t_inv(e0, Complex64::new(map.tip_preimage(), 0.0)))
                .arg();
            beta = raw + 2.0 * PI * ((beta - raw) / (2.0 * PI)).round();
            let dt = rec.dt();
            t += dt;
            welds.push(DiscWeld {
                e0,
                map,
                rec,
                dt,
                beta,
            });
            let mut replay = Complex64::from_polar(1.0, beta);
            for weld in welds.iter().rev() {
                replay = weld.push(replay);
            }
            samples.push(OracleSample {
                t,
                xi: beta,
                gamma: target,
                arclength: len_before + frac * edge_len,
                residual: (replay - target).norm(),
            });
            prev_stages = stages;
        }
        len_before += edge_len;
        vertex_times.push(t);
    }
    Ok(RadialOracleResult {
        samples,
        vertex_times,
        welds,
    })
}
