//! Seeded time-domain simulations of the control loops.
//!
//! The dither lock is simulated at baseband: the probe detuning from the
//! cavity resonance is the state, the phase modulation appears as a sinusoidal
//! excursion of the instantaneous frequency, and the photodetected
//! transmission is high-passed, mixed with the reference and low-passed before
//! a PI controller acts on the detuning. Photorefraction is a first-order lag
//! of the resonance toward a shift proportional to the intracavity power.
//!
//! The alignment loop is a two-axis gradient ascent on a Gaussian coupling
//! surface whose optimum performs a random walk.

mod alignment;
mod dither;
mod trace;

pub use alignment::{simulate_alignment, AlignmentConfig, AlignmentOptimizer, AlignmentSurface};
pub use dither::{
    error_signal, instability_scan, open_loop_error, simulate_cavity_lock, DriftModel, LockLoopConfig, SCAN_SEEDS,
};
pub use trace::{lock_mask, SimTrace};

/// Simulations refuse to run more samples than this.
pub const MAX_SAMPLES: f64 = 1e8;
