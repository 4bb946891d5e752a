//! Closed-form physics of the squeezer.
//!
//! Everything here is a pure function of its inputs. Powers are in watts,
//! frequencies in Hz and variances are normalized to the shot-noise level
//! (vacuum = 1). Decibels only appear through [`db_from_linear`] and
//! [`linear_from_db`].

mod budget;
mod cavity;
mod variance;

pub use budget::{asymptotic_squeezing_db, solve_missing_entry, Efficiency, EfficiencyChain};
pub use cavity::{derive_cavity, CavityGeometry, DerivedCavity};
pub use variance::{
    apply_loss, apply_phase_noise, classical_gain, classical_gain_x, invert_pair, mix_quadratures, pump_ratio,
    quadrature_variance, variance_at, GainBranch, Quadrature, QuadratureVariance, SqueezingModelParams,
};

use crate::{Error, Result};

/// `10 log10(v)`.
pub fn db_from_linear(v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("cannot convert {v} to dB")));
    }
    Ok(10.0 * v.log10())
}

/// `10^(d/10)`.
pub fn linear_from_db(d: f64) -> f64 {
    10f64.powf(d / 10.0)
}
