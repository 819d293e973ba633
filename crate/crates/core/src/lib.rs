//! Rank-one POVM compilation onto Mach-Zehnder meshes, forward simulation,
//! calibration, measurement tomography, and SDP-based certification tasks.

pub mod compiler;
pub mod error;
pub mod io;
pub mod linalg;
pub mod povm;
pub mod rng;
pub mod sdp;
pub mod simulator;
pub mod tasks;
pub mod tomography;

pub use error::{Error, Result};
