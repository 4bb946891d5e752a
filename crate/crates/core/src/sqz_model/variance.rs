use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shot-noise-normalized quadrature variance (vacuum = 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuadratureVariance(f64);

impl QuadratureVariance {
    pub const VACUUM: QuadratureVariance = QuadratureVariance(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!(
                "quadrature variance must be positive, got {value}"
            )))
        }
    }

    pub fn from_db(db: f64) -> Self {
        Self(super::linear_from_db(db))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        10.0 * self.0.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Squeezed,
    Antisqueezed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainBranch {
    Amplify,
    Deamplify,
}

/// The four parameters governing the quadrature spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqueezingModelParams {
    /// Total efficiency including escape and detection.
    pub eta_total: f64,
    /// Oscillation threshold, W.
    pub p_threshold: f64,
    /// Cavity half linewidth, Hz.
    pub hwhm: f64,
    /// Standard deviation of the detected quadrature angle, rad.
    pub phase_noise: f64,
}

impl Default for SqueezingModelParams {
    fn default() -> Self {
        Self {
            eta_total: 0.62,
            p_threshold: 0.060,
            hwhm: 100e6,
            phase_noise: 0.020,
        }
    }
}

impl SqueezingModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_total) {
            return Err(Error::Domain(format!("eta_total {} outside [0, 1]", self.eta_total)));
        }
        if !(self.p_threshold > 0.0) {
            return Err(Error::Domain("p_threshold must be positive".into()));
        }
        if !(self.hwhm > 0.0) {
            return Err(Error::Domain("hwhm must be positive".into()));
        }
        if !(self.phase_noise >= 0.0) {
            return Err(Error::Domain("phase_noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// Normalized pump amplitude `sqrt(p_pump / p_threshold)`.
pub fn pump_ratio(p_pump: f64, p_threshold: f64) -> Result<f64> {
    if !(p_pump >= 0.0) {
        return Err(Error::Domain(format!("pump power {p_pump} must be >= 0")));
    }
    if !(p_threshold > 0.0) {
        return Err(Error::Domain(format!("threshold {p_threshold} must be positive")));
    }
    Ok((p_pump / p_threshold).sqrt())
}

/// Classical parametric gain `1 / (1 -+ x)^2` at pump ratio `x`.
pub fn classical_gain_x(x: f64, branch: GainBranch) -> Result<f64> {
    match branch {
        GainBranch::Amplify if x >= 1.0 => Err(Error::AboveThreshold {
            p_pump: x * x,
            p_threshold: 1.0,
        }),
        GainBranch::Amplify => Ok(1.0 / ((1.0 - x) * (1.0 - x))),
        GainBranch::Deamplify => Ok(1.0 / ((1.0 + x) * (1.0 + x))),
    }
}

pub fn classical_gain(p_pump: f64, p_threshold: f64, branch: GainBranch) -> Result<f64> {
    let x = pump_ratio(p_pump, p_threshold)?;
    classical_gain_x(x, branch).map_err(|_| Error::AboveThreshold { p_pump, p_threshold })
}

/// Below-threshold quadrature variance at pump ratio `x` and normalized
/// sideband frequency `omega = f / hwhm`.
///
/// `x` may equal 1 here, which gives the ideal-limit spectra.
pub fn variance_at(eta: f64, x: f64, omega: f64, quad: Quadrature) -> f64 {
    let w2 = omega * omega;
    match quad {
        Quadrature::Squeezed => 1.0 - eta * 4.0 * x / ((1.0 + x) * (1.0 + x) + w2),
        Quadrature::Antisqueezed => 1.0 + eta * 4.0 * x / ((1.0 - x) * (1.0 - x) + w2),
    }
}

pub fn quadrature_variance(
    params: &SqueezingModelParams,
    p_pump: f64,
    f_sideband: f64,
    quad: Quadrature,
) -> Result<QuadratureVariance> {
    params.validate()?;
    if !(f_sideband >= 0.0) {
        return Err(Error::Domain("sideband frequency must be >= 0".into()));
    }
    let x = pump_ratio(p_pump, params.p_threshold)?;
    if x >= 1.0 {
        return Err(Error::AboveThreshold {
            p_pump,
            p_threshold: params.p_threshold,
        });
    }
    QuadratureVariance::new(variance_at(params.eta_total, x, f_sideband / params.hwhm, quad))
}

/// Gaussian quadrature-angle averaging with angle variance `phase_var`.
///
/// Returns the observed `(squeezed, antisqueezed)` pair. A negative
/// `phase_var` is the analytic continuation of the same expression and is
/// only meaningful inside fits.
pub fn mix_quadratures(v_sq: f64, v_asq: f64, phase_var: f64) -> (f64, f64) {
    let cos2 = 0.5 * (1.0 + (-2.0 * phase_var).exp());
    let sin2 = 1.0 - cos2;
    (v_sq * cos2 + v_asq * sin2, v_asq * cos2 + v_sq * sin2)
}

/// Observed variances when the measured quadrature angle jitters with
/// standard deviation `sigma`.
pub fn apply_phase_noise(
    v_sq: QuadratureVariance,
    v_asq: QuadratureVariance,
    sigma: f64,
) -> (QuadratureVariance, QuadratureVariance) {
    let (sq, asq) = mix_quadratures(v_sq.0, v_asq.0, sigma * sigma);
    (QuadratureVariance(sq), QuadratureVariance(asq))
}

/// Beam-splitter loss channel: `eta v + (1 - eta)`.
pub fn apply_loss(v: QuadratureVariance, eta: f64) -> QuadratureVariance {
    debug_assert!((0.0..=1.0).contains(&eta), "efficiency {eta} outside [0, 1]");
    QuadratureVariance(eta * v.0 + (1.0 - eta))
}

/// Recovers `(eta, x)` from a zero-frequency squeezed / anti-squeezed pair
/// using `(V+ - 1) / (1 - V-) = ((1 + x) / (1 - x))^2`.
pub fn invert_pair(v_sq: f64, v_asq: f64) -> Result<(f64, f64)> {
    if !(v_sq > 0.0 && v_sq < 1.0 && v_asq > 1.0) || !v_asq.is_finite() {
        return Err(Error::Domain(format!(
            "pair ({v_sq}, {v_asq}) is not a squeezed / anti-squeezed pair"
        )));
    }
    let r = ((v_asq - 1.0) / (1.0 - v_sq)).sqrt();
    let x = (r - 1.0) / (r + 1.0);
    let eta = (v_asq - 1.0) * (1.0 - x) * (1.0 - x) / (4.0 * x);
    Ok((eta, x))
}
