//! Factorized quadratic differentials `Q(z) = R·∏ (z−ζ_j)^{λ_j}`.
//!
//! Exponents are exact rationals. Each factor power is evaluated with a branch
//! cut running straight down from its location, so values are continuous on the
//! closed upper half-plane away from the factor points themselves.

use crate::angle::ratio_f64;
use crate::error::{Error, Result};
use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One factor `(z − location)^{exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub location: Complex64,
    pub exponent: Ratio<i64>,
}

/// A quadratic differential in factorized form.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedQD {
    pub prefactor: Complex64,
    pub factors: Vec<Factor>,
}

/// `w^a` with the branch cut pointing straight down from the origin:
/// the argument of `w` is taken in [−π/2, 3π/2).
pub fn pow_down(w: Complex64, a: f64) -> Complex64 {
    if w == Complex64::new(0.0, 0.0) {
        // 0^a: zero for positive exponents; callers guard the pole case.
        return if a > 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(f64::INFINITY, 0.0)
        };
    }
    let mut theta = w.im.atan2(w.re);
    if theta < -PI / 2.0 {
        theta += 2.0 * PI;
    }
    let log = Complex64::new(w.norm().ln(), theta);
    (log * a).exp()
}

/// Argument of `w` under the same downward-cut convention as [`pow_down`].
pub fn arg_down(w: Complex64) -> f64 {
    let mut theta = w.im.atan2(w.re);
    if theta < -PI / 2.0 {
        theta += 2.0 * PI;
    }
    theta
}

/// Build a differential, merging duplicate factor locations and dropping
/// factors whose merged exponent is zero.
pub fn make_qd(prefactor: Complex64, factors: &[(Complex64, Ratio<i64>)]) -> Result<FactorizedQD> {
    if prefactor == Complex64::new(0.0, 0.0) {
        return Err(Error::Degenerate("zero prefactor".into()));
    }
    let mut merged: Vec<Factor> = Vec::new();
    for &(location, exponent) in factors {
        if !location.re.is_finite() || !location.im.is_finite() {
            return Err(Error::Invalid(format!("non-finite factor location {location}")));
        }
        match merged.iter_mut().find(|f| f.location == location) {
            Some(f) => f.exponent += exponent,
            None => merged.push(Factor { location, exponent }),
        }
    }
    merged.retain(|f| f.exponent != Ratio::new(0, 1));
    Ok(FactorizedQD {
        prefactor,
        factors: merged,
    })
}

/// The constant differential `Q ≡ 1`.
pub fn unit_qd() -> FactorizedQD {
    FactorizedQD {
        prefactor: Complex64::new(1.0, 0.0),
        factors: Vec::new(),
    }
}

/// Evaluate `Q(z)`. Hitting a negative-exponent factor location is an error.
pub fn evaluate(qd: &FactorizedQD, z: Complex64) -> Result<Complex64> {
    let mut acc = qd.prefactor;
    for f in &qd.factors {
        let w = z - f.location;
        if w == Complex64::new(0.0, 0.0) {
            if f.exponent < Ratio::new(0, 1) {
                return Err(Error::PoleHit(f.location));
            }
            return Ok(Complex64::new(0.0, 0.0));
        }
        acc *= pow_down(w, ratio_f64(f.exponent));
    }
    Ok(acc)
}

/// Evaluate `Q` with one factor location excluded (the local leading
/// coefficient `lim Q(z)/(z−ζ)^λ` at that factor).
pub fn evaluate_without(qd: &FactorizedQD, z: Complex64, skip: Complex64) -> Result<Complex64> {
    let mut acc = qd.prefactor;
    for f in &qd.factors {
        if f.location == skip {
            continue;
        }
        let w = z - f.location;
        if w == Complex64::new(0.0, 0.0) {
            if f.exponent < Ratio::new(0, 1) {
                return Err(Error::PoleHit(f.location));
            }
            return Ok(Complex64::new(0.0, 0.0));
        }
        acc *= pow_down(w, ratio_f64(f.exponent));
    }
    Ok(acc)
}

/// Logarithmic derivative `Q'(z)/Q(z) = Σ λ_j/(z−ζ_j)`.
pub fn log_derivative(qd: &FactorizedQD, z: Complex64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for f in &qd.factors {
        let w = z - f.location;
        if w == Complex64::new(0.0, 0.0) {
            return Err(Error::PoleHit(f.location));
        }
        acc += ratio_f64(f.exponent) / w;
    }
    Ok(acc)
}

/// Rotate the trajectory family by θ: multiplies the prefactor by e^{−2iθ}.
pub fn rotate(qd: &FactorizedQD, theta: f64) -> FactorizedQD {
    FactorizedQD {
        prefactor: qd.prefactor * Complex64::new(0.0, -2.0 * theta).exp(),
        factors: qd.factors.clone(),
    }
}

/// Sum of all factor exponents, exactly.
pub fn exponent_sum(qd: &FactorizedQD) -> Ratio<i64> {
    qd.factors
        .iter()
        .fold(Ratio::new(0, 1), |acc, f| acc + f.exponent)
}

/// The two unit tangents `±v` at an ordinary point `z` along which
/// `arg[Q(z)·v²] = 2φ`.
pub fn trajectory_tangents(qd: &FactorizedQD, z: Complex64, phi: f64) -> Result<(Complex64, Complex64)> {
    let q = evaluate(qd, z)?;
    if q == Complex64::new(0.0, 0.0) {
        return Err(Error::Degenerate(format!("trajectory tangent at a zero of Q ({z})")));
    }
    let theta = phi - 0.5 * arg_down(q);
    let v = Complex64::new(0.0, theta).exp();
    Ok((v, -v))
}

// JSON shape: {"prefactor":[re,im],"factors":[{"loc":[re,im],"exp":"p/q"}]}

#[derive(Serialize, Deserialize)]
struct FactorJson {
    loc: [f64; 2],
    exp: String,
}

#[derive(Serialize, Deserialize)]
struct QdJson {
    prefactor: [f64; 2],
    factors: Vec<FactorJson>,
}

/// Parse an exact rational from `"p/q"` or `"p"`.
pub fn parse_ratio(s: &str) -> Result<Ratio<i64>> {
    let parse_int = |t: &str| -> Result<i64> {
        t.trim()
            .parse::<i64>()
            .map_err(|_| Error::Invalid(format!("bad rational component {t:?}")))
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let (p, q) = (parse_int(p)?, parse_int(q)?);
            if q == 0 {
                return Err(Error::Invalid(format!("zero denominator in {s:?}")));
            }
            Ok(Ratio::new(p, q))
        }
        None => Ok(Ratio::new(parse_int(s)?, 1)),
    }
}

/// Render a rational as `"p/q"`, or `"p"` when the denominator is 1.
pub fn ratio_string(r: Ratio<i64>) -> String {
    if *r.denom() == 1 {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn qd_to_json(qd: &FactorizedQD) -> serde_json::Value {
    let j = QdJson {
        prefactor: [qd.prefactor.re, qd.prefactor.im],
        factors: qd
            .factors
            .iter()
            .map(|f| FactorJson {
                loc: [f.location.re, f.location.im],
                exp: ratio_string(f.exponent),
            })
            .collect(),
    };
    serde_json::to_value(&j).expect("plain struct serializes")
}

pub fn qd_from_json(v: &serde_json::Value) -> Result<FactorizedQD> {
    let j: QdJson = serde_json::from_value(v.clone())?;
    let factors = j
        .factors
        .iter()
        .map(|f| Ok((Complex64::new(f.loc[0], f.loc[1]), parse_ratio(&f.exp)?)))
        .collect::<Result<Vec<_>>>()?;
    make_qd(Complex64::new(j.prefactor[0], j.prefactor[1]), &factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rational_example() -> FactorizedQD {
        // z² / ((z+1)(z−1))
        make_qd(
            c(1.0, 0.0),
            &[
                (c(0.0, 0.0), Ratio::new(2, 1)),
                (c(-1.0, 0.0), Ratio::new(-1, 1)),
                (c(1.0, 0.0), Ratio::new(-1, 1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluate_rational_at_2i() {
        let q = evaluate(&rational_example(), c(0.0, 2.0)).unwrap();
        // (2i)²/((2i)²−1) = −4/−5 = 4/5
        assert_relative_eq!(q.re, 0.8, max_relative = 1e-14);
        assert!(q.im.abs() < 1e-15);
    }

    #[test]
    fn evaluate_unit_and_zero() {
        assert_eq!(evaluate(&unit_qd(), c(3.0, 4.0)).unwrap(), c(1.0, 0.0));
        let lin = make_qd(c(1.0, 0.0), &[(c(0.0, 0.0), Ratio::new(1, 1))]).unwrap();
        assert_eq!(evaluate(&lin, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn evaluate_pole_is_error() {
        let err = evaluate(&rational_example(), c(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::PoleHit(_)));
    }

    #[test]
    fn log_derivative_cases() {
        let sq = make_qd(c(1.0, 0.0), &[(c(0.0, 0.0), Ratio::new(2, 1))]).unwrap();
        let d = log_derivative(&sq, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(d.re, 2.0, max_relative = 1e-15);
        // 2/(2i) − 1/(2i+1) − 1/(2i−1) = −i/5
        let d = log_derivative(&rational_example(), c(0.0, 2.0)).unwrap();
        assert!(d.re.abs() < 1e-15);
        assert_relative_eq!(d.im, -0.2, max_relative = 1e-14);
    }

    #[test]
    fn log_derivative_matches_finite_differences() {
        let qd = rational_example();
        let z = c(0.3, 1.7);
        let h = 1e-5;
        let fd = (evaluate(&qd, z + c(h, 0.0)).unwrap() - evaluate(&qd, z - c(h, 0.0)).unwrap())
            / (2.0 * h * evaluate(&qd, z).unwrap());
        let exact = log_derivative(&qd, z).unwrap();
        assert!((fd - exact).norm() < 1e-8);
    }

    #[test]
    fn rotate_full_turn_is_identity_on_values() {
        let qd = rational_example();
        let theta = 0.37;
        let back = rotate(&rotate(&qd, theta), PI - theta);
        let z = c(0.2, 1.1);
        let a = evaluate(&qd, z).unwrap();
        let b = evaluate(&back, z).unwrap();
        assert!((a - b).norm() < 1e-14 * a.norm());
    }

    #[test]
    fn tangents_unit_qd() {
        let (v, w) = trajectory_tangents(&unit_qd(), c(0.0, 1.0), PI / 2.0).unwrap();
        assert!((v - c(0.0, 1.0)).norm() < 1e-14 || (w - c(0.0, 1.0)).norm() < 1e-14);
        let (v, _) = trajectory_tangents(&unit_qd(), c(2.0, 0.5), 0.0).unwrap();
        assert!((v.im).abs() < 1e-14);
    }

    #[test]
    fn tangents_square_factor_at_i() {
        // Q = z²: at z = i, Q = −1, so v² must be negative real: v = ±i.
        let sq = make_qd(c(1.0, 0.0), &[(c(0.0, 0.0), Ratio::new(2, 1))]).unwrap();
        let (v, w) = trajectory_tangents(&sq, c(0.0, 1.0), 0.0).unwrap();
        for t in [v, w] {
            assert!(t.re.abs() < 1e-14, "expected ±i, got {t}");
            let q = evaluate(&sq, c(0.0, 1.0)).unwrap();
            let resid = arg_down(q * t * t).rem_euclid(2.0 * PI);
            assert!(resid.min(2.0 * PI - resid) < 1e-12);
        }
    }

    #[test]
    fn exponent_sums() {
        assert_eq!(exponent_sum(&unit_qd()), Ratio::new(0, 1));
        assert_eq!(exponent_sum(&rational_example()), Ratio::new(0, 1));
        let q = make_qd(
            c(1.0, 0.0),
            &[
                (c(0.0, 0.0), Ratio::new(3, 2)),
                (c(2.0, 0.0), Ratio::new(-1, 3)),
            ],
        )
        .unwrap();
        assert_eq!(exponent_sum(&q), Ratio::new(7, 6));
    }

    #[test]
    fn merge_and_reject() {
        let q = make_qd(
            c(1.0, 0.0),
            &[
                (c(1.0, 0.0), Ratio::new(1, 2)),
                (c(1.0, 0.0), Ratio::new(1, 2)),
            ],
        )
        .unwrap();
        assert_eq!(q.factors.len(), 1);
        assert_eq!(q.factors[0].exponent, Ratio::new(1, 1));
        assert!(make_qd(c(0.0, 0.0), &[]).is_err());
        // exponents cancelling entirely drops the factor
        let q = make_qd(
            c(1.0, 0.0),
            &[
                (c(1.0, 0.0), Ratio::new(1, 2)),
                (c(1.0, 0.0), Ratio::new(-1, 2)),
            ],
        )
        .unwrap();
        assert!(q.factors.is_empty());
    }

    #[test]
    fn real_inputs_give_real_values_on_the_axis() {
        // integer exponents at real locations + a conjugate pair
        let q = make_qd(
            c(2.0, 0.0),
            &[
                (c(-1.0, 0.0), Ratio::new(1, 1)),
                (c(3.0, 0.0), Ratio::new(-2, 1)),
                (c(0.5, 1.5), Ratio::new(1, 1)),
                (c(0.5, -1.5), Ratio::new(1, 1)),
            ],
        )
        .unwrap();
        for x in [-4.0, 0.0, 1.0, 2.9, 5.0] {
            let v = evaluate(&q, c(x, 0.0)).unwrap();
            assert!(v.im.abs() <= 1e-12 * v.norm().max(1.0), "Q({x}) = {v}");
        }
    }

    #[test]
    fn json_round_trip() {
        let qd = rational_example();
        let v = qd_to_json(&qd);
        let back = qd_from_json(&v).unwrap();
        assert_eq!(qd, back);
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"exp\":\"2\""));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("3/4").unwrap(), Ratio::new(3, 4));
        assert_eq!(parse_ratio("-2").unwrap(), Ratio::new(-2, 1));
        assert_eq!(parse_ratio("6/4").unwrap(), Ratio::new(3, 2));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("x").is_err());
    }
}
