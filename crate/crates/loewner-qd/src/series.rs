//! Truncated power-series arithmetic for Taylor stepping.
//!
//! All series share one truncation order; coefficient 0 is the current value.
//! Only the operations the steppers need are provided: products, reciprocals
//! computed coefficient-by-coefficient, and Horner evaluation.

use num_complex::Complex64;

/// Coefficients `c[0] + c[1]τ + … + c[M]τ^M` of a complex series.
#[derive(Debug, Clone)]
pub struct Series {
    pub c: Vec<Complex64>,
}

impl Series {
    pub fn zero(order: usize) -> Self {
        Series {
            c: vec![Complex64::new(0.0, 0.0); order + 1],
        }
    }

    pub fn constant(v: Complex64, order: usize) -> Self {
        let mut s = Series::zero(order);
        s.c[0] = v;
        s
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// Coefficient m of `self · other`, using coefficients 0..=m of both.
    pub fn mul_coeff(&self, other: &Series, m: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..=m {
            acc += self.c[j] * other.c[m - j];
        }
        acc
    }

    /// Evaluate at `tau` by Horner's rule.
    pub fn eval(&self, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.c.iter().rev() {
            acc = acc * tau + c;
        }
        acc
    }

    /// Evaluate the derivative series at `tau`.
    pub fn eval_derivative(&self, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in (1..self.c.len()).rev() {
            acc = acc * tau + self.c[m] * m as f64;
        }
        acc
    }
}

/// Extend `recip = 1/d` with coefficient m, given coefficients 0..=m of `d`
/// and 0..m of `recip`:  r[m] = −(Σ_{j=1..m} d[j] r[m−j]) / d[0]  (m ≥ 1).
pub fn recip_coeff(d: &Series, recip: &Series, m: usize) -> Complex64 {
    if m == 0 {
        return 1.0 / d.c[0];
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 1..=m {
        acc += d.c[j] * recip.c[m - j];
    }
    -acc / d.c[0]
}

/// Extend `q = n/d` with coefficient m: q[m] = (n[m] − Σ_{j=1..m} d[j] q[m−j]) / d[0].
pub fn div_coeff(n: &Series, d: &Series, q: &Series, m: usize) -> Complex64 {
    let mut acc = n.c[m];
    for j in 1..=m {
        acc -= d.c[j] * q.c[m - j];
    }
    acc / d.c[0]
}

/// Extend `e = exp(u)` with coefficient m, given coefficients 0..=m of `u`
/// and 0..m of `e`:  m·e[m] = Σ_{j=1..m} j·u[j]·e[m−j]  (from e′ = u′e).
pub fn exp_coeff(u: &Series, e: &Series, m: usize) -> Complex64 {
    if m == 0 {
        return u.c[0].exp();
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 1..=m {
        acc += (j as f64) * u.c[j] * e.c[m - j];
    }
    acc / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn reciprocal_inverts() {
        let order = 6;
        let mut d = Series::zero(order);
        d.c[0] = c(2.0, 1.0);
        d.c[1] = c(-0.3, 0.4);
        d.c[2] = c(0.1, 0.0);
        d.c[3] = c(0.0, -0.2);
        let mut r = Series::zero(order);
        for m in 0..=order {
            r.c[m] = recip_coeff(&d, &r, m);
        }
        // d·r should be 1 + O(τ^{order+1})
        for m in 0..=order {
            let p = d.mul_coeff(&r, m);
            let expect = if m == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) };
            assert!((p - expect).norm() < 1e-13, "coeff {m}: {p}");
        }
    }

    #[test]
    fn division_matches_reciprocal_product() {
        let order = 5;
        let mut n = Series::zero(order);
        let mut d = Series::zero(order);
        for m in 0..=order {
            n.c[m] = c(0.3 * m as f64 - 0.2, 0.1 * m as f64);
            d.c[m] = c(1.5 - 0.2 * m as f64, 0.05 * m as f64);
        }
        let mut q = Series::zero(order);
        for m in 0..=order {
            q.c[m] = div_coeff(&n, &d, &q, m);
        }
        for m in 0..=order {
            let back = d.mul_coeff(&q, m);
            assert!((back - n.c[m]).norm() < 1e-13);
        }
    }

    #[test]
    fn exponential_of_a_series() {
        let order = 6;
        let mut u = Series::zero(order);
        u.c[0] = c(0.2, -0.1);
        u.c[1] = c(0.0, 1.0);
        u.c[2] = c(-0.5, 0.3);
        let mut e = Series::zero(order);
        for m in 0..=order {
            e.c[m] = exp_coeff(&u, &e, m);
        }
        // compare against direct evaluation at an offset small enough that
        // the degree-6 truncation sits below the tolerance
        let tau = 0.01;
        let direct = u.eval(tau).exp();
        assert!((e.eval(tau) - direct).norm() < 1e-12);
    }

    #[test]
    fn horner_eval() {
        let mut s = Series::zero(3);
        s.c = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let v = s.eval(0.5);
        assert!((v - c(1.0 + 1.0 + 0.75 + 0.5, 0.0)).norm() < 1e-15);
        let d = s.eval_derivative(0.5);
        assert!((d - c(2.0 + 3.0 + 3.0, 0.0)).norm() < 1e-15);
    }
}
