//! Digital pipeline for vacuum-formed 3D printed electronics.
//!
//! The crate covers the full path from a mold to printable files:
//!
//! - [`geometry`]: sheet and mold meshes, STL I/O, closest-point queries.
//! - [`simulator`]: the heat, press and vacuum stages that turn a flat
//!   printed sheet into its formed shape.
//! - [`circuit`]: traces, pads and vias drawn on the formed surface, plus
//!   design-rule checking.
//! - [`flatten`]: pre-distortion of the design back onto the flat sheet,
//!   thickness compensation and layered multi-material solid generation.
//! - [`analysis`]: stretch metrics, trace resistance estimates and modulus
//!   calibration.
//! - [`project`]: the `.formcast.json` project file.
//!
//! All lengths are millimeters unless a name says otherwise.

pub mod analysis;
pub mod circuit;
pub mod fixtures;
pub mod flatten;
pub mod geometry;
pub mod project;
pub mod simulator;

pub use geometry::{Vec2, Vec3};

/// Largest sheet edge the forming machine accepts.
pub const MACHINE_SHEET_LIMIT_MM: f64 = 130.0;
