//! Job files: the JSON descriptions the command-line surface consumes,
//! and their conversion into library calls.
//!
//! Angles in job files are always multiples of π: a string `"p/q"` keeps the
//! value exact, a bare number is snapped to a nearby small rational when one
//! exists. Exponents ride along inside the differential description as
//! `"p/q"` strings. Unknown fields anywhere are errors — a silently ignored
//! typo in a tolerance would be worse than a parse failure.

use num_complex::Complex64;
use serde::Deserialize;
use std::f64::consts::PI;

use loewner_qd::chordal::{self, ArcKind, ArcSpec, StopRule};
use loewner_qd::error::{Error, Result};
use loewner_qd::lattice::{self, LatticePathSpec};
use loewner_qd::multislit::MultiStart;
use loewner_qd::qdiff::{self, FactorizedQD};
use loewner_qd::radial::RadialStart;
use loewner_qd::{PiAngle, RunConfig};

/// An angle as a multiple of π: exact `"p/q"` or a number to be snapped.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Exact(String),
    Approx(f64),
}

impl AngleSpec {
    pub fn to_angle(&self) -> Result<PiAngle> {
        match self {
            AngleSpec::Exact(s) => Ok(PiAngle::exact(qdiff::parse_ratio(s)?)),
            AngleSpec::Approx(v) => {
                if !v.is_finite() {
                    return Err(Error::Invalid(format!("angle {v}·π is not finite")));
                }
                Ok(PiAngle::from_f64_snapped(v * PI))
            }
        }
    }
}

/// Stop rule of one arc.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StopSpec {
    /// Stop after this much added capacity-time.
    Capacity(f64),
    /// Stop after this much added arclength.
    Length(f64),
}

impl StopSpec {
    fn to_rule(&self) -> Result<StopRule> {
        let (rule, v) = match self {
            StopSpec::Capacity(v) => (StopRule::Capacity(*v), *v),
            StopSpec::Length(v) => (StopRule::Length(*v), *v),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("stop value {v} must be positive")));
        }
        Ok(rule)
    }
}

/// One arc of a trace job. The first arc is a launch and takes either
/// `theta_over_pi` (explicit departure) or `phi_over_pi` plus
/// `direction_index` (trajectory phase; the index picks one of the
/// admissible departures, sorted increasing). Later arcs take `turn_over_pi`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcJob {
    pub theta_over_pi: Option<AngleSpec>,
    pub phi_over_pi: Option<AngleSpec>,
    pub direction_index: Option<usize>,
    pub turn_over_pi: Option<AngleSpec>,
    pub stop: StopSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceJob {
    /// The ambient differential; the trivial one when omitted.
    pub qd: Option<serde_json::Value>,
    #[serde(default)]
    pub launch_x: f64,
    /// Explicit arc list…
    pub segments: Option<Vec<ArcJob>>,
    /// …or a lattice walk traced in the trivial differential.
    pub lattice: Option<LatticePathSpec>,
    #[serde(default)]
    pub config: RunConfig,
}

/// Ready-to-run form of a trace job.
pub struct TracePlan {
    pub qd: FactorizedQD,
    pub launch_x: f64,
    pub arcs: Vec<ArcSpec>,
    pub cfg: RunConfig,
}

fn parse_qd(v: &Option<serde_json::Value>) -> Result<FactorizedQD> {
    match v {
        Some(v) => qdiff::qd_from_json(v),
        None => Ok(qdiff::unit_qd()),
    }
}

impl TraceJob {
    pub fn plan(&self) -> Result<TracePlan> {
        let qd = parse_qd(&self.qd)?;
        self.config.validate()?;
        let (launch_x, arcs) = match (&self.segments, &self.lattice) {
            (Some(_), Some(_)) => {
                return Err(Error::Invalid(
                    "give either segments or a lattice walk, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Invalid(
                    "a trace job needs segments or a lattice walk".into(),
                ))
            }
            (Some(segs), None) => (self.launch_x, self.arc_list(&qd, segs)?),
            (None, Some(walk)) => {
                let vertices = lattice::build_path(walk)?;
                let segments = lattice::to_segments(&vertices)?;
                (walk.origin, lattice::arcs_for(&segments)?)
            }
        };
        Ok(TracePlan {
            qd,
            launch_x,
            arcs,
            cfg: self.config.clone(),
        })
    }

    fn arc_list(&self, qd: &FactorizedQD, segs: &[ArcJob]) -> Result<Vec<ArcSpec>> {
        let mut arcs = Vec::with_capacity(segs.len());
        for (k, seg) in segs.iter().enumerate() {
            let kind = if k == 0 {
                match (&seg.theta_over_pi, &seg.phi_over_pi, &seg.turn_over_pi) {
                    (Some(theta), None, None) => {
                        if seg.direction_index.is_some() {
                            return Err(Error::Invalid(
                                "direction_index only applies to a phi_over_pi launch".into(),
                            ));
                        }
                        ArcKind::Launch {
                            theta_dep: theta.to_angle()?,
                        }
                    }
                    (None, Some(phi), None) => {
                        let phi = phi.to_angle()?;
                        let options = chordal::admissible_departures(qd, self.launch_x, &phi)?;
                        let index = seg.direction_index.ok_or_else(|| {
                            Error::Invalid(
                                "a phi_over_pi launch needs a direction_index".into(),
                            )
                        })?;
                        let theta_dep = options.get(index).cloned().ok_or_else(|| {
                            Error::Invalid(format!(
                                "direction_index {index} out of range: {} admissible \
                                 departure(s) at phase {}·π",
                                options.len(),
                                phi.radians() / PI
                            ))
                        })?;
                        ArcKind::Launch { theta_dep }
                    }
                    _ => {
                        return Err(Error::Invalid(
                            "the first segment must give theta_over_pi or phi_over_pi \
                             (with direction_index), and no turn"
                                .into(),
                        ))
                    }
                }
            } else {
                match (&seg.theta_over_pi, &seg.phi_over_pi, &seg.turn_over_pi) {
                    (None, None, Some(turn)) => ArcKind::Turn {
                        delta: turn.to_angle()?,
                    },
                    _ => {
                        return Err(Error::Invalid(format!(
                            "segment {k} must give turn_over_pi and nothing else"
                        )))
                    }
                }
            };
            arcs.push(ArcSpec {
                kind,
                stop: seg.stop.to_rule()?,
            });
        }
        Ok(arcs)
    }
}

/// One slit of a multi-slit job.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlitJob {
    pub x: f64,
    pub theta_over_pi: AngleSpec,
    /// Capacity share; all slits share equally when every weight is omitted.
    pub weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiJob {
    pub qd: Option<serde_json::Value>,
    pub slits: Vec<SlitJob>,
    pub t_end: f64,
    #[serde(default)]
    pub config: RunConfig,
}

pub struct MultiPlan {
    pub qd: FactorizedQD,
    pub starts: Vec<MultiStart>,
    pub weights: Vec<f64>,
    pub t_end: f64,
    pub cfg: RunConfig,
}

impl MultiJob {
    pub fn plan(&self) -> Result<MultiPlan> {
        let qd = parse_qd(&self.qd)?;
        self.config.validate()?;
        if self.slits.is_empty() {
            return Err(Error::Invalid("a multi job needs at least one slit".into()));
        }
        let given = self.slits.iter().filter(|s| s.weight.is_some()).count();
        if given != 0 && given != self.slits.len() {
            return Err(Error::Invalid(
                "give a weight for every slit or for none".into(),
            ));
        }
        let n = self.slits.len() as f64;
        let mut starts = Vec::with_capacity(self.slits.len());
        let mut weights = Vec::with_capacity(self.slits.len());
        for s in &self.slits {
            starts.push(MultiStart {
                x: s.x,
                theta_dep: s.theta_over_pi.to_angle()?,
            });
            weights.push(s.weight.unwrap_or(1.0 / n));
        }
        Ok(MultiPlan {
            qd,
            starts,
            weights,
            t_end: self.t_end,
            cfg: self.config.clone(),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialJob {
    pub qd: serde_json::Value,
    /// Launch angle on the circle, in radians.
    pub xi0: f64,
    pub theta_over_pi: AngleSpec,
    pub t_end: f64,
    #[serde(default)]
    pub config: RunConfig,
}

pub struct RadialPlan {
    pub qd: FactorizedQD,
    pub start: RadialStart,
    pub t_end: f64,
    pub cfg: RunConfig,
}

impl RadialJob {
    pub fn plan(&self) -> Result<RadialPlan> {
        let qd = qdiff::qd_from_json(&self.qd)?;
        self.config.validate()?;
        Ok(RadialPlan {
            qd,
            start: RadialStart {
                xi0: self.xi0,
                theta_dep: self.theta_over_pi.to_angle()?,
            },
            t_end: self.t_end,
            cfg: self.config.clone(),
        })
    }
}

fn parse_vertices(raw: &[[f64; 2]]) -> Vec<Complex64> {
    raw.iter().map(|v| Complex64::new(v[0], v[1])).collect()
}

fn default_n_subdiv() -> usize {
    64
}

fn default_tol() -> f64 {
    1e-12
}

/// A welding job: a polyline in the half-plane (explicit or from a lattice
/// walk) or, with `disc_vertices`, in the disc.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleJob {
    pub vertices: Option<Vec<[f64; 2]>>,
    pub lattice: Option<LatticePathSpec>,
    pub disc_vertices: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_n_subdiv")]
    pub n_subdiv: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

pub enum OraclePlan {
    HalfPlane {
        vertices: Vec<Complex64>,
        n_subdiv: usize,
        tol: f64,
    },
    Disc {
        vertices: Vec<Complex64>,
        n_subdiv: usize,
        tol: f64,
    },
}

impl OracleJob {
    pub fn plan(&self) -> Result<OraclePlan> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!(
                "tol {} must be positive",
                self.tol
            )));
        }
        match (&self.vertices, &self.lattice, &self.disc_vertices) {
            (Some(raw), None, None) => {
                let vertices = parse_vertices(raw);
                loewner_qd::oracle::validate_polyline(&vertices)?;
                Ok(OraclePlan::HalfPlane {
                    vertices,
                    n_subdiv: self.n_subdiv,
                    tol: self.tol,
                })
            }
            (None, Some(walk), None) => Ok(OraclePlan::HalfPlane {
                vertices: lattice::build_path(walk)?,
                n_subdiv: self.n_subdiv,
                tol: self.tol,
            }),
            (None, None, Some(raw)) => {
                let vertices = parse_vertices(raw);
                loewner_qd::radial::validate_disc_polyline(&vertices)?;
                Ok(OraclePlan::Disc {
                    vertices,
                    n_subdiv: self.n_subdiv,
                    tol: self.tol,
                })
            }
            _ => Err(Error::Invalid(
                "give exactly one of vertices, lattice, disc_vertices".into(),
            )),
        }
    }
}

fn default_check_subdiv() -> usize {
    256
}

/// Trace a straight-segment path in the trivial differential, weld the same
/// path, and compare the two driving functions.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckJob {
    pub vertices: Option<Vec<[f64; 2]>>,
    pub lattice: Option<LatticePathSpec>,
    #[serde(default = "default_check_subdiv")]
    pub n_subdiv: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// The check passes when the sup deviation is below this.
    pub tolerance: f64,
    #[serde(default)]
    pub config: RunConfig,
}

pub struct CheckPlan {
    pub vertices: Vec<Complex64>,
    pub launch_x: f64,
    pub arcs: Vec<ArcSpec>,
    pub n_subdiv: usize,
    pub tol: f64,
    pub tolerance: f64,
    pub cfg: RunConfig,
}

impl CheckJob {
    pub fn plan(&self) -> Result<CheckPlan> {
        self.config.validate()?;
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Invalid(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        let vertices = match (&self.vertices, &self.lattice) {
            (Some(raw), None) => parse_vertices(raw),
            (None, Some(walk)) => lattice::build_path(walk)?,
            _ => {
                return Err(Error::Invalid(
                    "give exactly one of vertices, lattice".into(),
                ))
            }
        };
        let segments = lattice::to_segments(&vertices)?;
        let arcs = lattice::arcs_for(&segments)?;
        Ok(CheckPlan {
            launch_x: vertices[0].re,
            vertices,
            arcs,
            n_subdiv: self.n_subdiv,
            tol: self.tol,
            tolerance: self.tolerance,
            cfg: self.config.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn trace_job_with_explicit_segments() {
        let job: TraceJob = serde_json::from_str(
            r#"{
                "qd": {"prefactor": [1.0, 0.0], "factors": []},
                "segments": [
                    {"theta_over_pi": "1/2", "stop": {"capacity": 1.0}},
                    {"turn_over_pi": "-1/2", "stop": {"length": 0.5}}
                ],
                "config": {"h": 1e-3}
            }"#,
        )
        .unwrap();
        let plan = job.plan().unwrap();
        assert_eq!(plan.arcs.len(), 2);
        assert_eq!(plan.cfg.h, 1e-3);
        assert_eq!(plan.cfg.order, 4);
        match &plan.arcs[0].kind {
            ArcKind::Launch { theta_dep } => {
                assert_eq!(theta_dep.over_pi(), Some(Ratio::new(1, 2)))
            }
            other => panic!("expected launch, got {other:?}"),
        }
        assert_eq!(plan.arcs[1].stop, StopRule::Length(0.5));
    }

    #[test]
    fn trace_job_resolves_phase_launches() {
        // trivial differential: phase π/2 admits exactly the vertical ray
        let job: TraceJob = serde_json::from_str(
            r#"{
                "segments": [
                    {"phi_over_pi": "1/2", "direction_index": 0,
                     "stop": {"capacity": 0.1}}
                ]
            }"#,
        )
        .unwrap();
        let plan = job.plan().unwrap();
        match &plan.arcs[0].kind {
            ArcKind::Launch { theta_dep } => {
                assert_eq!(theta_dep.over_pi(), Some(Ratio::new(1, 2)))
            }
            other => panic!("expected launch, got {other:?}"),
        }
    }

    #[test]
    fn trace_job_from_lattice_walk() {
        let job: TraceJob = serde_json::from_str(
            r#"{
                "lattice": {"kind": "square", "spacing": 0.5, "origin": -1.0,
                            "moves": ["U", "R", "U"]}
            }"#,
        )
        .unwrap();
        let plan = job.plan().unwrap();
        assert_eq!(plan.launch_x, -1.0);
        assert_eq!(plan.arcs.len(), 3);
        assert!(plan.qd.factors.is_empty());
    }

    #[test]
    fn rejects_malformed_trace_jobs() {
        // both segments and lattice
        let both: TraceJob = serde_json::from_str(
            r#"{
                "segments": [{"theta_over_pi": "1/2", "stop": {"capacity": 1.0}}],
                "lattice": {"kind": "square", "spacing": 1.0, "moves": ["U"]}
            }"#,
        )
        .unwrap();
        assert!(both.plan().is_err());
        // a turn in the first slot
        let turn_first: TraceJob = serde_json::from_str(
            r#"{"segments": [{"turn_over_pi": "1/2", "stop": {"capacity": 1.0}}]}"#,
        )
        .unwrap();
        assert!(turn_first.plan().is_err());
        // unknown field at the top level
        assert!(serde_json::from_str::<TraceJob>(r#"{"segmets": []}"#).is_err());
        // unknown stop rule
        assert!(serde_json::from_str::<TraceJob>(
            r#"{"segments": [{"theta_over_pi": "1/2", "stop": {"until": 1.0}}]}"#
        )
        .is_err());
    }

    #[test]
    fn multi_job_defaults_to_equal_weights() {
        let job: MultiJob = serde_json::from_str(
            r#"{
                "slits": [
                    {"x": -1.0, "theta_over_pi": "1/2"},
                    {"x": 1.0, "theta_over_pi": "1/2"}
                ],
                "t_end": 0.5
            }"#,
        )
        .unwrap();
        let plan = job.plan().unwrap();
        assert_eq!(plan.weights, vec![0.5, 0.5]);
        // partial weights are refused
        let partial: MultiJob = serde_json::from_str(
            r#"{
                "slits": [
                    {"x": -1.0, "theta_over_pi": "1/2", "weight": 0.3},
                    {"x": 1.0, "theta_over_pi": "1/2"}
                ],
                "t_end": 0.5
            }"#,
        )
        .unwrap();
        assert!(partial.plan().is_err());
    }

    #[test]
    fn oracle_job_picks_a_side() {
        let hp: OracleJob = serde_json::from_str(
            r#"{"vertices": [[0.0, 0.0], [0.0, 1.0]], "n_subdiv": 8}"#,
        )
        .unwrap();
        assert!(matches!(
            hp.plan().unwrap(),
            OraclePlan::HalfPlane { n_subdiv: 8, .. }
        ));
        let disc: OracleJob = serde_json::from_str(
            r#"{"disc_vertices": [[1.0, 0.0], [0.5, 0.0]]}"#,
        )
        .unwrap();
        assert!(matches!(disc.plan().unwrap(), OraclePlan::Disc { .. }));
        let none: OracleJob = serde_json::from_str(r#"{"n_subdiv": 8}"#).unwrap();
        assert!(none.plan().is_err());
    }

    #[test]
    fn snapped_numeric_angles_are_exact() {
        let a = AngleSpec::Approx(0.5).to_angle().unwrap();
        assert_eq!(a.over_pi(), Some(Ratio::new(1, 2)));
    }
}
