//! Phenomenological photorefraction: a linear-in-power index change that
//! blueshifts the cavity resonance and drags the phase-matching temperature.
//!
//! The coefficient is interpreted as index change per watt of pump power.

use serde::{Deserialize, Serialize};

use crate::sqz_model::CavityGeometry;
use crate::OPTICAL_FREQUENCY;

/// Measured photorefraction coefficient, per watt.
pub const MEASURED_COEFFICIENT: f64 = -3.97e-3;
/// 1σ uncertainty of [`MEASURED_COEFFICIENT`].
pub const MEASURED_COEFFICIENT_STDERR: f64 = 0.12e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotorefractionModel {
    /// Photorefractive index change per watt.
    pub c_pr: f64,
    /// Thermo-optic index change per watt, usually of opposite sign.
    #[serde(default)]
    pub thermo_c: f64,
}

impl Default for PhotorefractionModel {
    fn default() -> Self {
        Self {
            c_pr: MEASURED_COEFFICIENT,
            thermo_c: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseMatching {
    /// Phase-matching temperature at zero pump power, °C.
    pub t_pm0: f64,
    /// Wave-vector mismatch per degree, rad / (m °C). Zero disables the
    /// temperature dependence.
    pub kappa_t: f64,
    /// Power-induced shift of the phase-matching temperature, °C / W.
    pub slope_s: f64,
    /// Interaction length, m.
    pub length: f64,
}

impl Default for PhaseMatching {
    fn default() -> Self {
        Self {
            t_pm0: 140.5,
            kappa_t: 0.0,
            slope_s: 0.0,
            length: 0.012,
        }
    }
}

pub fn index_shift(model: &PhotorefractionModel, p_pump: f64) -> f64 {
    (model.c_pr + model.thermo_c) * p_pump
}

/// Resonance frequency shift, Hz. Positive values are blueshifts.
pub fn resonance_shift(model: &PhotorefractionModel, geometry: &CavityGeometry, p_pump: f64) -> f64 {
    -OPTICAL_FREQUENCY * index_shift(model, p_pump) / geometry.n_eff
}

/// Resonance shift per watt for a given index coefficient, Hz/W.
pub fn shift_per_watt(coefficient: f64, n_eff: f64) -> f64 {
    -OPTICAL_FREQUENCY * coefficient / n_eff
}

/// Inverse of [`shift_per_watt`]: index coefficient from a fitted
/// shift-versus-power slope.
pub fn coefficient_from_shift_slope(slope_hz_per_w: f64, n_eff: f64) -> f64 {
    -slope_hz_per_w * n_eff / OPTICAL_FREQUENCY
}

/// `sin(u) / u` with the removable singularity filled in.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Half the accumulated phase mismatch, `Δk L / 2`.
pub fn half_mismatch(pm: &PhaseMatching, temperature: f64, p_pump: f64) -> f64 {
    pm.kappa_t * (temperature - (pm.t_pm0 + pm.slope_s * p_pump)) * pm.length / 2.0
}

/// Relative conversion efficiency `sinc²(Δk L / 2)`.
pub fn pm_efficiency(pm: &PhaseMatching, temperature: f64, p_pump: f64) -> f64 {
    sinc(half_mismatch(pm, temperature, p_pump)).powi(2)
}

/// Pump ratio corrected for phase mismatch.
pub fn effective_pump_ratio(x: f64, pm_eff: f64) -> f64 {
    x * pm_eff.clamp(0.0, 1.0).sqrt()
}
