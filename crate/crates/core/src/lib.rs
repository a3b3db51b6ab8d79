//! Design analysis and signal-chain simulation for an x-axis tuning-fork
//! MEMS gyroscope whose proofmass hangs on eight vertical springs.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: device description, config loading, mass properties
//! - [`suspension`]: beam stiffness and 6-DOF suspension assembly
//! - [`modal`]: generalized eigenproblem, mode labels, 8-1 vs 4-1 comparison
//! - [`damping`]: squeeze-film damping of the perforated proofmass
//! - [`sensing`]: parallel-plate capacitors and the mass-asymmetry offset study
//! - [`dynamics`]: lumped two-frame tuning-fork simulator
//! - [`readout`]: capacitance-to-voltage, demodulation, scale factor, noise
//!
//! All quantities are SI internally. The config document accepts micrometres
//! for lengths.

pub mod config;
pub mod damping;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod modal;
pub mod readout;
pub mod sensing;
pub mod suspension;

pub use error::{Error, Result};

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_8128e-12;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.806_65;

pub const DEG_PER_RAD: f64 = 180.0 / std::f64::consts::PI;

/// Bundled config encoding the reference device.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/device_paper.cfg");
