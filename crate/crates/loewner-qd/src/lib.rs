//! Driving functions of slits that grow along trajectory arcs of quadratic
//! differentials.
//!
//! A slit growing from the real line into the upper half-plane has a chordal
//! Loewner driving function; when the slit is a trajectory arc of a finitely
//! factorized quadratic differential, the driving function solves an explicit
//! first-order ODE system coupling the driving point to the images of the
//! differential's marked points under the uniformizing maps. This crate
//! integrates those systems (half-plane, several slits at once, and the disc
//! analogue), builds the piecewise-linear inputs coming from lattice paths,
//! and cross-checks everything against a direct slit-by-slit conformal
//! welding oracle that never looks at the ODE.

pub mod angle;
pub mod chordal;
pub mod config;
pub mod error;
pub mod lattice;
pub mod multislit;
pub mod oracle;
pub mod qdiff;
pub mod radial;
pub mod series;
pub mod slitmaps;

pub use angle::PiAngle;
pub use config::{RadialMode, RunConfig};
pub use error::{Error, Result};
pub use qdiff::{FactorizedQD, Factor};
pub use slitmaps::TiltedSlitMap;
