//! System-matrix calibration toolkit for magnetic particle imaging.
//!
//! Simulates Lissajous-trajectory system matrices, checks and exploits their
//! spatial symmetries, recovers high-resolution rows from decimated
//! calibration scans and reconstructs particle distributions.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod physics;
pub mod recon;
pub mod sampling;
pub mod sr;
pub mod symmetry;

pub use error::{Error, Result};
pub use model::{
    AxisDrive, Channel, Grid3, ParticleModel, Phantom, Provenance, SMRow, ScanSequence, SignalVector, SystemMatrix,
    MU0,
};
