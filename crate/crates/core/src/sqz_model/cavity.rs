use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Physical description of the waveguide resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityGeometry {
    /// Crystal length, m.
    pub length: f64,
    /// Effective refractive index at 1550 nm. Not measured; 2.14 is the
    /// extraordinary index of lithium niobate.
    pub n_eff: f64,
    /// Propagation loss, dB/m.
    pub alpha: f64,
    /// Power reflectivity of the high reflector.
    pub r_hr: f64,
    /// Power reflectivity of the output coupler.
    pub r_pr: f64,
}

impl Default for CavityGeometry {
    fn default() -> Self {
        Self {
            length: 0.012,
            n_eff: 2.14,
            alpha: 10.0,
            r_hr: 0.99,
            r_pr: 0.64,
        }
    }
}

impl CavityGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_string()));
        if !(self.length > 0.0) || !self.length.is_finite() {
            return bad("length must be positive");
        }
        if !(self.n_eff >= 1.0) || !self.n_eff.is_finite() {
            return bad("n_eff must be >= 1");
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be >= 0");
        }
        if !(self.r_pr > 0.0 && self.r_pr <= self.r_hr && self.r_hr <= 1.0) {
            return bad("reflectivities must satisfy 0 < r_pr <= r_hr <= 1");
        }
        Ok(())
    }

    /// Round-trip propagation power loss `1 - 10^(-2 alpha L / 10)`.
    pub fn round_trip_loss(&self) -> f64 {
        1.0 - 10f64.powf(-2.0 * self.alpha * self.length / 10.0)
    }
}

/// Quantities that follow from a [`CavityGeometry`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCavity {
    /// Free spectral range, Hz.
    pub fsr: f64,
    pub finesse: f64,
    /// Full linewidth, Hz.
    pub fwhm: f64,
    /// Half linewidth, Hz.
    pub hwhm: f64,
    /// Fraction of intracavity photons leaving through the output coupler.
    pub escape_eta: f64,
}

/// Free spectral range, finesse, linewidth and escape efficiency.
///
/// The escape efficiency is the ratio of the output-coupler decay rate to the
/// total decay rate, each rate taken as `-ln` of the corresponding power
/// survival per round trip. This is exact for a continuously damped mode and
/// reduces to `T_pr / (T_pr + T_hr + loss)` for small transmissions.
pub fn derive_cavity(geometry: &CavityGeometry) -> Result<DerivedCavity> {
    geometry.validate()?;
    let loss = geometry.round_trip_loss();
    let g = (geometry.r_hr * geometry.r_pr * (1.0 - loss)).sqrt();
    if g >= 1.0 {
        return Err(Error::InvalidGeometry(
            "round-trip amplitude gain >= 1, the resonance does not decay".into(),
        ));
    }
    let fsr = SPEED_OF_LIGHT / (2.0 * geometry.n_eff * geometry.length);
    let finesse = std::f64::consts::PI * g.sqrt() / (1.0 - g);
    let fwhm = fsr / finesse;

    let rate_out = -geometry.r_pr.ln();
    let rate_hr = -geometry.r_hr.ln();
    let rate_loss = -(1.0 - loss).ln();
    let escape_eta = rate_out / (rate_out + rate_hr + rate_loss);

    Ok(DerivedCavity {
        fsr,
        finesse,
        fwhm,
        hwhm: fwhm / 2.0,
        escape_eta,
    })
}
