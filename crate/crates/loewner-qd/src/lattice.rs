//! Square, triangle and hexagonal lattice paths in the upper half-plane,
//! and their reduction to straight-segment runs for the chordal tracer.
//!
//! In the trivial ambient differential the trajectories of every phase are
//! straight lines, so a lattice path traces as: launch along the first edge,
//! then turn by the signed heading change at each corner. Every lattice
//! heading is an exact rational multiple of π, which keeps all downstream
//! exponents exact rationals.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::angle::PiAngle;
use crate::chordal::{ArcKind, ArcSpec, StopRule};
use crate::error::{Error, Result};
use crate::oracle::validate_polyline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    Triangle,
    Hexagonal,
}

/// A walk on one of the three regular lattices, scaled by `spacing` and
/// started at a real `origin`.
///
/// Move alphabets: square takes `R`, `U`, `L`, `D`; triangle takes headings
/// in degrees, `0`, `60`, `120`, `180`, `240`, `300`; hexagonal alternates
/// between the palettes `90`, `210`, `330` (even moves) and `30`, `150`,
/// `270` (odd moves), matching the two vertex classes of the honeycomb.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticePathSpec {
    pub kind: LatticeKind,
    pub spacing: f64,
    #[serde(default)]
    pub origin: f64,
    pub moves: Vec<String>,
}

/// One straight run of a polyline.
#[derive(Debug, Clone)]
pub struct Segment {
    /// Directed heading, reduced to [0, 2π).
    pub dir: PiAngle,
    /// Trajectory angle of the run: the heading mod π, in [0, π).
    pub phi: PiAngle,
    pub length: f64,
}

/// Heading of one move in degrees, validated against the lattice alphabet.
fn move_degrees(kind: LatticeKind, index: usize, mv: &str) -> Result<i64> {
    let token = mv.trim().to_ascii_uppercase();
    match kind {
        LatticeKind::Square => match token.as_str() {
            "R" => Ok(0),
            "U" => Ok(90),
            "L" => Ok(180),
            "D" => Ok(270),
            _ => Err(Error::BadPath(format!(
                "move {index}: {mv:?} is not one of R, U, L, D"
            ))),
        },
        LatticeKind::Triangle => match token.as_str() {
            "0" => Ok(0),
            "60" => Ok(60),
            "120" => Ok(120),
            "180" => Ok(180),
            "240" => Ok(240),
            "300" => Ok(300),
            _ => Err(Error::BadPath(format!(
                "move {index}: {mv:?} is not a multiple-of-60° heading"
            ))),
        },
        LatticeKind::Hexagonal => {
            let palette: [i64; 3] = if index % 2 == 0 {
                [90, 210, 330]
            } else {
                [30, 150, 270]
            };
            palette
                .iter()
                .find(|d| token == d.to_string())
                .copied()
                .ok_or_else(|| {
                    Error::BadPath(format!(
                        "move {index}: {mv:?} is not in the {} honeycomb palette \
                         {}°/{}°/{}°",
                        if index % 2 == 0 { "even" } else { "odd" },
                        palette[0],
                        palette[1],
                        palette[2]
                    ))
                })
        }
    }
}

/// Unit vector of a heading that is an exact multiple of 30°. Kept
/// table-driven so that equal headings give bit-equal steps and collinear
/// runs cancel exactly.
fn unit_from_degrees(deg: i64) -> Complex64 {
    let s3h = 3.0_f64.sqrt() * 0.5;
    let (re, im) = match deg.rem_euclid(360) {
        0 => (1.0, 0.0),
        30 => (s3h, 0.5),
        60 => (0.5, s3h),
        90 => (0.0, 1.0),
        120 => (-0.5, s3h),
        150 => (-s3h, 0.5),
        180 => (-1.0, 0.0),
        210 => (-s3h, -0.5),
        240 => (-0.5, -s3h),
        270 => (0.0, -1.0),
        300 => (0.5, -s3h),
        330 => (s3h, -0.5),
        d => unreachable!("heading {d}° is not a lattice direction"),
    };
    Complex64::new(re, im)
}

/// Unit vector of an angle; exact multiples of 30° go through the lattice
/// table, everything else through cos/sin.
pub fn unit_direction(angle: &PiAngle) -> Complex64 {
    if let Some(r) = angle.over_pi() {
        let deg = r * Ratio::new(180, 1);
        if deg.is_integer() && deg.to_integer() % 30 == 0 {
            return unit_from_degrees(deg.to_integer());
        }
    }
    Complex64::new(angle.radians().cos(), angle.radians().sin())
}

/// Walk the moves from the origin and return the vertex list,
/// rejecting walks that self-intersect or leave the upper half-plane.
pub fn build_path(spec: &LatticePathSpec) -> Result<Vec<Complex64>> {
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(Error::Invalid(format!(
            "lattice spacing {} must be positive",
            spec.spacing
        )));
    }
    if !spec.origin.is_finite() {
        return Err(Error::Invalid(format!(
            "lattice origin {} must be finite",
            spec.origin
        )));
    }
    if spec.moves.is_empty() {
        return Err(Error::BadPath(
            "empty move list builds a single-vertex path".into(),
        ));
    }
    let mut vertices = vec![Complex64::new(spec.origin, 0.0)];
    for (k, mv) in spec.moves.iter().enumerate() {
        let deg = move_degrees(spec.kind, k, mv)?;
        let next = vertices[k] + spec.spacing * unit_from_degrees(deg);
        vertices.push(next);
    }
    validate_polyline(&vertices)?;
    Ok(vertices)
}

/// Edge list of a simple polyline as `(heading, trajectory angle, length)`
/// runs, with consecutive collinear edges merged into one.
pub fn to_segments(vertices: &[Complex64]) -> Result<Vec<Segment>> {
    validate_polyline(vertices)?;
    let mut out: Vec<Segment> = Vec::new();
    for w in vertices.windows(2) {
        let step = w[1] - w[0];
        let dir = wrap_two_pi(PiAngle::from_f64_snapped(step.arg()));
        let length = step.norm();
        if let Some(last) = out.last_mut() {
            if last.dir.sub(&dir).wrap_signed().radians().abs() < 1e-12 {
                last.length += length;
                continue;
            }
        }
        out.push(Segment {
            phi: dir.mod_pi(),
            dir,
            length,
        });
    }
    Ok(out)
}

/// Rebuild the vertex list of a segment run from a real starting point.
pub fn synthesize(origin: f64, segments: &[Segment]) -> Vec<Complex64> {
    let mut vertices = vec![Complex64::new(origin, 0.0)];
    for seg in segments {
        let last = *vertices.last().unwrap();
        vertices.push(last + seg.length * unit_direction(&seg.dir));
    }
    vertices
}

/// Arc specifications that trace the segment run in the trivial ambient
/// differential: launch along the first heading, then turn by the signed
/// heading change at each corner, stopping every arc by its run length.
pub fn arcs_for(segments: &[Segment]) -> Result<Vec<ArcSpec>> {
    let first = segments
        .first()
        .ok_or_else(|| Error::BadPath("no segments to trace".into()))?;
    let theta = first.dir.radians();
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::BadPath(format!(
            "first heading {theta} rad must point into the upper half-plane"
        )));
    }
    let mut arcs = vec![ArcSpec {
        kind: ArcKind::Launch {
            theta_dep: first.dir,
        },
        stop: StopRule::Length(first.length),
    }];
    for pair in segments.windows(2) {
        let delta = pair[0].dir.sub(&pair[1].dir).wrap_signed();
        if delta.radians().abs() > std::f64::consts::PI - 1e-12 {
            return Err(Error::BadPath(
                "segments double back on each other".into(),
            ));
        }
        arcs.push(ArcSpec {
            kind: ArcKind::Turn { delta },
            stop: StopRule::Length(pair[1].length),
        });
    }
    Ok(arcs)
}

/// Reduce an angle to [0, 2π), keeping exactness when present.
fn wrap_two_pi(a: PiAngle) -> PiAngle {
    match a.over_pi() {
        Some(r) => {
            let two = Ratio::new(2, 1);
            let mut r = r % two;
            if r < Ratio::zero() {
                r += two;
            }
            PiAngle::exact(r)
        }
        None => PiAngle::approx(a.radians().rem_euclid(2.0 * std::f64::consts::PI)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec(kind: LatticeKind, moves: &[&str]) -> LatticePathSpec {
        LatticePathSpec {
            kind,
            spacing: 1.0,
            origin: 0.0,
            moves: moves.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn square_staircase_vertices() {
        let path = build_path(&spec(LatticeKind::Square, &["U", "R", "R", "U"])).unwrap();
        assert_eq!(
            path,
            vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(2.0, 1.0), c(2.0, 2.0)]
        );
    }

    #[test]
    fn square_segments_merge_collinear_runs() {
        let path = build_path(&spec(LatticeKind::Square, &["U", "R", "R", "U"])).unwrap();
        let segs = to_segments(&path).unwrap();
        assert_eq!(segs.len(), 3);
        let want = [(Ratio::new(1, 2), 1.0), (Ratio::new(0, 1), 2.0), (Ratio::new(1, 2), 1.0)];
        for (seg, (phi, len)) in segs.iter().zip(&want) {
            assert_eq!(seg.phi.over_pi(), Some(*phi));
            assert_eq!(seg.length, *len);
        }
        // headings keep the full direction, angles only its line
        assert_eq!(segs[0].dir.over_pi(), Some(Ratio::new(1, 2)));
        assert_eq!(segs[1].dir.over_pi(), Some(Ratio::new(0, 1)));
    }

    #[test]
    fn triangle_two_moves() {
        let path = build_path(&spec(LatticeKind::Triangle, &["60", "120"])).unwrap();
        let s3h = 3.0_f64.sqrt() * 0.5;
        assert_eq!(path[1], c(0.5, s3h));
        assert!((path[2] - c(0.0, 2.0 * s3h)).norm() < 1e-15);
    }

    #[test]
    fn hexagonal_alternates_palettes() {
        let path =
            build_path(&spec(LatticeKind::Hexagonal, &["90", "150", "90", "30"])).unwrap();
        assert_eq!(path.len(), 5);
        let segs = to_segments(&path).unwrap();
        let dirs: Vec<Ratio<i64>> = segs.iter().map(|s| s.dir.over_pi().unwrap()).collect();
        assert_eq!(
            dirs,
            vec![
                Ratio::new(1, 2),
                Ratio::new(5, 6),
                Ratio::new(1, 2),
                Ratio::new(1, 6)
            ]
        );
        // wrong palette for the parity is refused
        assert!(build_path(&spec(LatticeKind::Hexagonal, &["30"])).is_err());
        assert!(build_path(&spec(LatticeKind::Hexagonal, &["90", "90"])).is_err());
    }

    #[test]
    fn rejects_bad_walks() {
        assert!(build_path(&spec(LatticeKind::Square, &[])).is_err());
        assert!(build_path(&spec(LatticeKind::Square, &["X"])).is_err());
        // dips back to the real line
        assert!(build_path(&spec(LatticeKind::Square, &["U", "R", "D"])).is_err());
        // exact reversal
        assert!(build_path(&spec(LatticeKind::Square, &["U", "U", "D"])).is_err());
        // crossing through an earlier edge
        assert!(
            build_path(&spec(LatticeKind::Square, &["U", "U", "R", "D", "L", "L"])).is_err()
        );
        // the first move may not run along the boundary
        assert!(build_path(&spec(LatticeKind::Square, &["R", "U"])).is_err());
    }

    #[test]
    fn round_trip_square_exactly() {
        let path = build_path(&spec(LatticeKind::Square, &["U", "R", "R", "U", "L"])).unwrap();
        let segs = to_segments(&path).unwrap();
        let back = synthesize(0.0, &segs);
        // merged runs drop interior vertices but endpoints survive exactly
        assert_eq!(back[0], path[0]);
        assert_eq!(*back.last().unwrap(), *path.last().unwrap());
        for v in &back {
            assert!(path.contains(v));
        }
    }

    #[test]
    fn round_trip_hexagonal_closely() {
        let path =
            build_path(&spec(LatticeKind::Hexagonal, &["90", "150", "90", "150", "90"]))
                .unwrap();
        let segs = to_segments(&path).unwrap();
        let back = synthesize(0.0, &segs);
        assert_eq!(back.len(), path.len());
        for (a, b) in back.iter().zip(&path) {
            assert!((a - b).norm() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn arcs_follow_heading_changes() {
        let path = build_path(&spec(LatticeKind::Square, &["U", "R", "R", "U"])).unwrap();
        let arcs = arcs_for(&to_segments(&path).unwrap()).unwrap();
        assert_eq!(arcs.len(), 3);
        match &arcs[0].kind {
            ArcKind::Launch { theta_dep } => {
                assert_eq!(theta_dep.over_pi(), Some(Ratio::new(1, 2)))
            }
            other => panic!("expected launch, got {other:?}"),
        }
        match &arcs[1].kind {
            // right turn: heading drops from π/2 to 0
            ArcKind::Turn { delta } => assert_eq!(delta.over_pi(), Some(Ratio::new(1, 2))),
            other => panic!("expected turn, got {other:?}"),
        }
        match &arcs[2].kind {
            ArcKind::Turn { delta } => assert_eq!(delta.over_pi(), Some(Ratio::new(-1, 2))),
            other => panic!("expected turn, got {other:?}"),
        }
        assert_eq!(arcs[1].stop, StopRule::Length(2.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_square_walks_build_or_fail_cleanly(
            moves in proptest::collection::vec(0usize..4, 1..12)
        ) {
            let letters = ["U", "R", "L", "D"];
            let names: Vec<&str> = moves.iter().map(|&m| letters[m]).collect();
            let spec = spec(LatticeKind::Square, &names);
            if let Ok(path) = build_path(&spec) {
                let segs = to_segments(&path).unwrap();
                prop_assert!(segs.iter().all(|s| s.length > 0.0));
                prop_assert!(segs.iter().all(|s| s.dir.is_exact()));
                let back = synthesize(0.0, &segs);
                prop_assert_eq!(*back.last().unwrap(), *path.last().unwrap());
            }
        }
    }
}
