//! Digital twin of a fiber-coupled, cavity-enhanced waveguide squeezer.
//!
//! The crate is organised by subsystem:
//!
//! - [`sqz_model`]: closed-form resonator and squeezing physics, loss and
//!   efficiency budgets, dB helpers.
//! - [`photorefraction`]: power-dependent index change, resonance blueshift
//!   and phase-matching drift.
//! - [`estimate`]: weighted nonlinear least squares with covariance
//!   reporting, a brute-force grid oracle and the model-specific fits.
//! - [`locksim`]: seeded time-domain simulations of the dither lock and the
//!   fiber auto-alignment loop.
//! - [`sensing`]: squeezing-enhanced Mach-Zehnder phase sensing.
//! - [`synthetic`]: seeded generators of measurement sets at known
//!   parameters.
//! - [`cli`]: configuration, CSV ingestion, reports and the `sqzlab` commands.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimate;
pub mod locksim;
pub mod photorefraction;
pub mod sensing;
pub mod sqz_model;
pub mod synthetic;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Probe / squeezing wavelength, m.
pub const WAVELENGTH: f64 = 1550e-9;

/// Optical carrier frequency at [`WAVELENGTH`], Hz.
pub const OPTICAL_FREQUENCY: f64 = SPEED_OF_LIGHT / WAVELENGTH;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
