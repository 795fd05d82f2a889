//! The straight tilted-slit map of the upper half-plane.
//!
//! `F(z) = (z − c⁺)^p (z − c⁻)^{1−p} + x` maps ℍ onto ℍ minus a straight
//! segment leaving `x` at angle `πp`, with the hydrodynamic normalization
//! `F(z) = z − hcap/z + O(1/z²)` at infinity. Writing `s` for the root spread,
//! the two real roots sit at `c⁻ = x − p·s` and `c⁺ = x + (1−p)·s`, and the
//! preimage of the slit tip is the real point `x + (1−2p)·s`.
//!
//! Both factor powers use branch cuts pointing straight down from their roots,
//! so `F` is continuous on the closed upper half-plane.

use crate::error::{Error, Result};
use crate::qdiff::pow_down;
use num_complex::Complex64;

/// Half-plane capacity of the unit-raw-time slit at angle πp: `hcap = 2·λ(p)·t_raw`.
pub fn lambda(p: f64) -> f64 {
    p * (1.0 - p) / 4.0
}

/// Slope of the square-root driving law of a straight slit at angle πp:
/// the driving function is `x + c(p)·√t` in capacity time t.
pub fn driving_coefficient(p: f64) -> f64 {
    2.0 * (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt()
}

/// A straight slit at angle `πp` from the real point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedSlitMap {
    /// Slit angle divided by π, in (0, 1).
    pub p: f64,
    /// Base point of the slit on the real axis.
    pub x: f64,
    /// Root spread: the two preimages of `x` are `x − p·s` and `x + (1−p)·s`.
    pub s: f64,
    /// Half-plane capacity of the slit.
    pub hcap: f64,
}

impl TiltedSlitMap {
    /// Slit of given half-plane capacity.
    pub fn make(p: f64, x: f64, hcap: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Invalid(format!("slit angle fraction p={p} outside (0,1)")));
        }
        if !(hcap > 0.0) {
            return Err(Error::Invalid(format!("capacity {hcap} must be positive")));
        }
        let s = (2.0 * hcap / (p * (1.0 - p))).sqrt();
        Ok(TiltedSlitMap { p, x, s, hcap })
    }

    /// Slit whose tip lies at distance `len` from the base.
    pub fn make_reaching(p: f64, x: f64, len: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Invalid(format!("slit angle fraction p={p} outside (0,1)")));
        }
        if !(len > 0.0) {
            return Err(Error::Invalid(format!("slit length {len} must be positive")));
        }
        let s = len / (p.powf(p) * (1.0 - p).powf(1.0 - p));
        Ok(TiltedSlitMap {
            p,
            x,
            s,
            hcap: p * (1.0 - p) * s * s / 2.0,
        })
    }

    pub fn c_minus(&self) -> f64 {
        self.x - self.p * self.s
    }

    pub fn c_plus(&self) -> f64 {
        self.x + (1.0 - self.p) * self.s
    }

    pub fn tip_preimage(&self) -> f64 {
        self.x + (1.0 - 2.0 * self.p) * self.s
    }

    /// `(c⁻, tip preimage, c⁺)` — always in increasing order.
    pub fn landmarks(&self) -> (f64, f64, f64) {
        (self.c_minus(), self.tip_preimage(), self.c_plus())
    }

    /// Physical tip of the slit: `x + p^p (1−p)^{1−p} s · e^{iπp}`.
    pub fn tip(&self) -> Complex64 {
        let len = self.p.powf(self.p) * (1.0 - self.p).powf(1.0 - self.p) * self.s;
        Complex64::new(self.x, 0.0)
            + len * Complex64::new(0.0, std::f64::consts::PI * self.p).exp()
    }

    /// Evaluate the map on the closed upper half-plane.
    pub fn apply(&self, z: Complex64) -> Complex64 {
        let a = z - self.c_plus();
        let b = z - self.c_minus();
        pow_down(a, self.p) * pow_down(b, 1.0 - self.p) + self.x
    }

    /// Analytic derivative `F'(z) = (F(z)−x)·[p/(z−c⁺) + (1−p)/(z−c⁻)]`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let a = z - self.c_plus();
        let b = z - self.c_minus();
        (self.apply(z) - self.x) * (self.p / a + (1.0 - self.p) / b)
    }

    /// `F''` at the tip preimage, where `F'` vanishes: `−(tip − x)/(s² p (1−p))`.
    pub fn second_derivative_at_tip(&self) -> Complex64 {
        -(self.tip() - self.x) / (self.s * self.s * self.p * (1.0 - self.p))
    }

    /// Invert the map by damped Newton iteration with an analytic derivative.
    ///
    /// Candidate starting points: the caller's guess, the hydrodynamic
    /// far-field inverse, the target itself, and the local square-root chart
    /// around the tip. A step that leaves the closed half-plane or grows the
    /// residual is repeatedly halved.
    pub fn invert(&self, w: Complex64, guess: Option<Complex64>, tol: f64) -> Result<Complex64> {
        let scale = self.s.max(1.0).max((w - self.x).norm());
        let tol_abs = tol * scale;
        let mut starts: Vec<Complex64> = Vec::new();
        if let Some(g) = guess {
            starts.push(g);
        }
        let d = w - self.x;
        if d.norm() > 3.0 * self.s {
            starts.push(w + self.hcap / d);
        }
        starts.push(w);
        // local chart: F(z) ≈ tip + ½F''·(z − tip preimage)²
        let f2 = self.second_derivative_at_tip();
        let u = (2.0 * (w - self.tip()) / f2).sqrt();
        let zp = Complex64::new(self.tip_preimage(), 0.0);
        starts.push(zp + u);
        starts.push(zp - u);

        let mut best: Option<(Complex64, f64)> = None;
        for start in starts {
            if let Some(z) = self.newton_from(start, w, tol_abs) {
                let r = (self.apply(z) - w).norm();
                if r <= tol_abs {
                    return Ok(z);
                }
                if best.map(|(_, rb)| r < rb).unwrap_or(true) {
                    best = Some((z, r));
                }
            }
        }
        let (last, residual) = best.unwrap_or((w, f64::INFINITY));
        Err(Error::NoConvergence {
            target: w,
            last,
            residual,
        })
    }

    fn newton_from(&self, start: Complex64, w: Complex64, tol_abs: f64) -> Option<Complex64> {
        let mut z = start;
        if z.im < 0.0 {
            z = Complex64::new(z.re, 0.0);
        }
        let mut r = (self.apply(z) - w).norm();
        for _ in 0..50 {
            if r <= tol_abs {
                return Some(z);
            }
            let mut dz = (self.apply(z) - w) / self.derivative(z);
            if !dz.re.is_finite() || !dz.im.is_finite() {
                // derivative vanished (tip preimage or a root): nudge off axis
                z += Complex64::new(0.0, 1e-3 * self.s);
                r = (self.apply(z) - w).norm();
                continue;
            }
            // bisection damping: keep the iterate in the closed half-plane
            // and force residual decrease
            let mut accepted = false;
            for _ in 0..40 {
                let znew = z - dz;
                if znew.im >= 0.0 {
                    let rnew = (self.apply(znew) - w).norm();
                    if rnew < r {
                        z = znew;
                        r = rnew;
                        accepted = true;
                        break;
                    }
                }
                dz *= 0.5;
            }
            if !accepted {
                return Some(z);
            }
        }
        Some(z)
    }
}
