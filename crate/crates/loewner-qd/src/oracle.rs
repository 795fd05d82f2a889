//! Direct driving-function oracle for piecewise-linear slits.
//!
//! Completely independent of the ODE tracer: the curve is subdivided into
//! short chords, and each chord is welded away by one explicit tilted-slit
//! map fitted to reach the chord's endpoint. Capacities add along the
//! composition, and the driving value after each weld is the tip preimage
//! of the innermost map. Agreement between this and the traced system is
//! the main end-to-end correctness check of the crate.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::slitmaps::TiltedSlitMap;

/// Reject vertex lists that cannot bound a growing simple slit: the first
/// vertex must sit on the real line, every later vertex strictly above it,
/// edges must have positive length, and no two edges may cross.
pub fn validate_polyline(vertices: &[Complex64]) -> Result<()> {
    if vertices.len() < 2 {
        return Err(Error::BadPath("need at least two vertices".into()));
    }
    if vertices[0].im != 0.0 {
        return Err(Error::BadPath(format!(
            "first vertex {} must lie on the real line",
            vertices[0]
        )));
    }
    for (k, v) in vertices.iter().enumerate().skip(1) {
        if !(v.im > 0.0) {
            return Err(Error::BadPath(format!(
                "vertex {k} at {v} must lie strictly above the real line"
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
            // adjacent edges share a vertex and are allowed to touch there
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

pub(crate) fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

/// Proper or improper intersection of segments ab and cd. When
/// `share_endpoint` is set, b == c is tolerated (consecutive edges after one
/// in between would still be caught by the general test).
pub(crate) fn segments_cross(
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
    _share_endpoint: bool,
) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Complex64, q: Complex64, r: Complex64| {
        orient(p, q, r) == 0.0
            && r.re >= p.re.min(q.re)
            && r.re <= p.re.max(q.re)
            && r.im >= p.im.min(q.im)
            && r.im <= p.im.max(q.im)
    };
    on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b)
}

/// State after one welded chord.
#[derive(Debug, Clone)]
pub struct OracleSample {
    /// Capacity-time absorbed so far.
    pub t: f64,
    /// Driving value: tip preimage of the innermost map.
    pub xi: f64,
    /// Chord endpoint on the physical curve.
    pub gamma: Complex64,
    /// Arclength along the polyline up to `gamma`.
    pub arclength: f64,
    /// Forward re-application check: push the driving value back out
    /// through every map and measure the miss against `gamma`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// One entry per welded chord, starting with the launch state at t = 0.
    pub samples: Vec<OracleSample>,
    /// Capacity-time at which each original vertex was absorbed.
    pub vertex_times: Vec<f64>,
    /// The welding maps, outermost first.
    pub maps: Vec<TiltedSlitMap>,
}

impl OracleResult {
    /// The samples as `(capacity-time, driving value)` pairs.
    pub fn driving(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.xi)).collect()
    }
}

/// Weld a polyline away chord by chord and record the driving function.
///
/// Each edge is split into `n_subdiv` chords at the Chebyshev-style
/// fractions `(1 − cos(πk/n))/2`, which cluster quadratically at both edge
/// ends. The clustering matters: right after a corner the driving value
/// grows like a square root of capacity, and uniform chords would flatten
/// that spike into an O(n^{−1/2}) error. The next chord endpoint is pulled
/// back through every existing map, then removed by a fresh tilted slit map
/// whose tip lands exactly on it.
pub fn polyline_driving(
    vertices: &[Complex64],
    n_subdiv: usize,
    tol: f64,
) -> Result<OracleResult> {
    validate_polyline(vertices)?;
    if n_subdiv == 0 {
        return Err(Error::Invalid("n_subdiv must be at least 1".into()));
    }
    let launch = vertices[0].re;
    let mut maps: Vec<TiltedSlitMap> = Vec::new();
    let mut t = 0.0;
    let mut samples = vec![OracleSample {
        t: 0.0,
        xi: launch,
        gamma: vertices[0],
        arclength: 0.0,
        residual: 0.0,
    }];
    let mut vertex_times = vec![0.0];
    let mut xi = launch;
    // pullback stages of the previous chord endpoint, reused as Newton
    // starting points: stage j holds the endpoint behind the first j maps
    let mut prev_stages: Vec<Complex64> = vec![vertices[0]];
    let mut len_before = 0.0;
    for edge in vertices.windows(2) {
        let edge_len = (edge[1] - edge[0]).norm();
        for k in 1..=n_subdiv {
            let frac = 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / n_subdiv as f64).cos());
            let target = edge[0] + frac * (edge[1] - edge[0]);
            let mut w = target;
            let mut stages = Vec::with_capacity(maps.len() + 1);
            stages.push(w);
            for (j, map) in maps.iter().enumerate() {
                w = map.invert(w, prev_stages.get(j + 1).copied(), tol)?;
                stages.push(w);
            }
            if !(w.im > 0.0) {
                return Err(Error::BadPath(format!(
                    "chord endpoint {target} pulls back to {w}; refine the subdivision"
                )));
            }
            let p = (w - xi).arg() / std::f64::consts::PI;
            if !(p > 1e-9 && p < 1.0 - 1e-9) {
                return Err(Error::Degenerate(format!(
                    "chord direction collapses onto the real line (p = {p})"
                )));
            }
            let map = TiltedSlitMap::make_reaching(p, xi, (w - xi).norm())?;
            t += 0.5 * map.hcap;
            xi = map.tip_preimage();
            maps.push(map);
            let replayed = evaluate_composition(&maps, Complex64::new(xi, 0.0));
            samples.push(OracleSample {
                t,
                xi,
                gamma: target,
                arclength: len_before + frac * edge_len,
                residual: (replayed - target).norm(),
            });
            prev_stages = stages;
        }
        len_before += edge_len;
        vertex_times.push(t);
    }
    Ok(OracleResult {
        samples,
        vertex_times,
        maps,
    })
}

/// Evaluate the composed slit map (outermost first) at a point of the upper
/// half-plane. Used to check the welding against the far-field normalization.
pub fn evaluate_composition(maps: &[TiltedSlitMap], z: Complex64) -> Complex64 {
    let mut w = z;
    for map in maps.iter().rev() {
        w = map.apply(w);
    }
    w
}

/// Shape-preserving cubic interpolant on strictly increasing knots
/// (Fritsch–Carlson derivative limiting).
#[derive(Debug, Clone)]
pub struct Pchip {
    t: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn fit(t: &[f64], y: &[f64]) -> Result<Self> {
        if t.len() != y.len() || t.len() < 2 {
            return Err(Error::Invalid(format!(
                "interpolation needs matching knot/value lists of length ≥ 2, got {}/{}",
                t.len(),
                y.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(
                "interpolation knots must increase strictly".into(),
            ));
        }
        let n = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let sec: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if sec[i - 1] * sec[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / sec[i - 1] + w2 / sec[i]);
            }
        }
        d[0] = edge_derivative(h[0], h.get(1).copied().unwrap_or(h[0]), sec[0], sec.get(1).copied().unwrap_or(sec[0]));
        d[n - 1] = edge_derivative(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            sec[n - 2],
            if n >= 3 { sec[n - 3] } else { sec[n - 2] },
        );
        Ok(Pchip {
            t: t.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    /// Evaluate inside the knot range (clamped at the ends).
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        if x <= self.t[0] {
            return self.y[0];
        }
        if x >= self.t[n - 1] {
            return self.y[n - 1];
        }
        let i = match self.t.partition_point(|&v| v <= x) {
            0 => 0,
            k => k - 1,
        };
        let h = self.t[i + 1] - self.t[i];
        let s = (x - self.t[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h * h10 * self.d[i] + h01 * self.y[i + 1] + h * h11 * self.d[i + 1]
    }
}

/// One-sided three-point endpoint derivative with the usual monotonicity clamps.
fn edge_derivative(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 < 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Largest pointwise gap between two sampled driving functions over the
/// capacity-time range they share, comparing each sample list against the
/// interpolant of the other.
pub fn sup_deviation(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("need at least two samples on each side".into()));
    }
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let (ta, ya): (Vec<f64>, Vec<f64>) = a.iter().copied().unzip();
    let (tb, yb): (Vec<f64>, Vec<f64>) = b.iter().copied().unzip();
    let pa = Pchip::fit(&ta, &ya)?;
    let pb = Pchip::fit(&tb, &yb)?;
    let mut sup: f64 = 0.0;
    for &(t, y) in a.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        sup = sup.max((y - pb.eval(t)).abs());
    }
    for &(t, y) in b.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        sup = sup.max((y - pa.eval(t)).abs());
    }
    Ok(sup)
}
