//! Angles tracked as multiples of π.
//!
//! Slit departure angles determine boundary exponents through expressions like
//! (N+2)·θ/π − 2, and those exponents feed exact bookkeeping identities. To keep
//! the bookkeeping exact whenever the geometry allows it (for example on lattice
//! paths, where every direction is a rational multiple of π), angles carry an
//! optional exact rational coefficient alongside their float value.

use num_rational::Ratio;
use std::f64::consts::PI;

/// An angle `value = coeff·π`, with `coeff` kept as an exact rational when known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiAngle {
    value: f64,
    over_pi: Option<Ratio<i64>>,
}

impl PiAngle {
    /// Exact rational multiple of π.
    pub fn exact(over_pi: Ratio<i64>) -> Self {
        let value = ratio_f64(over_pi) * PI;
        PiAngle {
            value,
            over_pi: Some(over_pi),
        }
    }

    /// Plain floating-point angle with no exactness claim.
    pub fn approx(value: f64) -> Self {
        PiAngle {
            value,
            over_pi: None,
        }
    }

    /// Float angle, upgraded to exact if `value/π` sits within `tol` of a small rational.
    pub fn from_f64_snapped(value: f64) -> Self {
        match snap_ratio(value / PI, 4096, 1e-9) {
            Some(r) => PiAngle::exact(r),
            None => PiAngle::approx(value),
        }
    }

    pub fn radians(&self) -> f64 {
        self.value
    }

    /// Exact coefficient of π, when one is known.
    pub fn over_pi(&self) -> Option<Ratio<i64>> {
        self.over_pi
    }

    pub fn is_exact(&self) -> bool {
        self.over_pi.is_some()
    }

    pub fn add(&self, other: &PiAngle) -> PiAngle {
        match (self.over_pi, other.over_pi) {
            (Some(a), Some(b)) => PiAngle::exact(a + b),
            _ => PiAngle::approx(self.value + other.value),
        }
    }

    pub fn sub(&self, other: &PiAngle) -> PiAngle {
        match (self.over_pi, other.over_pi) {
            (Some(a), Some(b)) => PiAngle::exact(a - b),
            _ => PiAngle::approx(self.value - other.value),
        }
    }

    pub fn neg(&self) -> PiAngle {
        match self.over_pi {
            Some(a) => PiAngle::exact(-a),
            None => PiAngle::approx(-self.value),
        }
    }

    /// Multiply by an exact rational.
    pub fn scale(&self, r: Ratio<i64>) -> PiAngle {
        match self.over_pi {
            Some(a) => PiAngle::exact(a * r),
            None => PiAngle::approx(self.value * ratio_f64(r)),
        }
    }

    /// Reduce modulo π into [0, π).
    pub fn mod_pi(&self) -> PiAngle {
        match self.over_pi {
            Some(a) => PiAngle::exact(rem_euclid_ratio(a, 1)),
            None => PiAngle::approx(self.value.rem_euclid(PI)),
        }
    }

    /// Reduce modulo 2π into (−π, π].
    pub fn wrap_signed(&self) -> PiAngle {
        match self.over_pi {
            Some(a) => {
                let mut r = rem_euclid_ratio(a, 2);
                if r > Ratio::new(1, 1) {
                    r -= Ratio::new(2, 1);
                }
                PiAngle::exact(r)
            }
            None => {
                let mut v = self.value.rem_euclid(2.0 * PI);
                if v > PI {
                    v -= 2.0 * PI;
                }
                PiAngle::approx(v)
            }
        }
    }
}

fn rem_euclid_ratio(a: Ratio<i64>, modulus: i64) -> Ratio<i64> {
    let m = Ratio::new(modulus, 1);
    let mut r = a - (a / m).floor() * m;
    if r < Ratio::new(0, 1) {
        r += m;
    }
    if r >= m {
        r -= m;
    }
    r
}

pub fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Best rational approximation of `x` with denominator ≤ `max_den`, accepted
/// only if it reproduces `x` within `tol`. Continued-fraction expansion.
pub fn snap_ratio(x: f64, max_den: i64, tol: f64) -> Option<Ratio<i64>> {
    if !x.is_finite() {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, x.floor() as i64, 1i64);
    let mut frac = x - x.floor();
    for _ in 0..64 {
        let approx = p1 as f64 / q1 as f64;
        if (approx - x).abs() <= tol * x.abs().max(1.0) {
            return Some(Ratio::new(p1, q1));
        }
        if frac.abs() < 1e-18 {
            break;
        }
        let r = 1.0 / frac;
        let a = r.floor();
        if !(a.is_finite()) || a >= i64::MAX as f64 / 2.0 {
            break;
        }
        let a_i = a as i64;
        let p2 = a_i.checked_mul(p1).and_then(|v| v.checked_add(p0));
        let q2 = a_i.checked_mul(q1).and_then(|v| v.checked_add(q0));
        match (p2, q2) {
            (Some(p2), Some(q2)) if q2 <= max_den => {
                p0 = p1;
                q0 = q1;
                p1 = p2;
                q1 = q2;
                frac = r - a;
            }
            _ => break,
        }
    }
    let approx = p1 as f64 / q1 as f64;
    if (approx - x).abs() <= tol * x.abs().max(1.0) {
        Some(Ratio::new(p1, q1))
    } else {
        None
    }
}
