//! Seeded generators of synthetic measurement sets at known parameters.
//!
//! The raw measurements behind the reference fits are not available, so every
//! fit is exercised by regenerating data from the reference parameter values and
//! recovering them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::estimate::DataSeries;
use crate::photorefraction::effective_pump_ratio;
use crate::sqz_model::{mix_quadratures, variance_at, Quadrature};
use crate::Result;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Amplified and deamplified gain at `powers` with multiplicative Gaussian
/// noise of relative size `rel_noise`. Sigmas are `rel_noise` times the
/// noisy value. `pm` optionally degrades the pump ratio per power.
pub fn gain_dataset(
    p_threshold: f64,
    powers: &[f64],
    rel_noise: f64,
    seed: u64,
    pm: Option<&dyn Fn(f64) -> f64>,
) -> Result<(DataSeries, DataSeries)> {
    let mut r = rng(seed);
    let mut amp = Vec::new();
    let mut deamp = Vec::new();
    for &p in powers {
        let mut x = (p / p_threshold).sqrt();
        if let Some(pm) = pm {
            x = effective_pump_ratio(x, pm(p));
        }
        let ga = 1.0 / (1.0 - x).powi(2) * (1.0 + rel_noise * normal(&mut r));
        let gd = 1.0 / (1.0 + x).powi(2) * (1.0 + rel_noise * normal(&mut r));
        amp.push(ga);
        deamp.push(gd);
    }
    let sig = |v: &[f64]| {
        v.iter()
            .map(|g| if rel_noise > 0.0 { rel_noise * g } else { 1e-3 * g })
            .collect::<Vec<_>>()
    };
    Ok((
        DataSeries::new(powers.to_vec(), amp.clone(), sig(&amp))?,
        DataSeries::new(powers.to_vec(), deamp.clone(), sig(&deamp))?,
    ))
}

/// Observed variance in dB including phase noise.
pub fn observed_variance_db(eta: f64, x: f64, omega: f64, phase_noise: f64, quad: Quadrature) -> f64 {
    let vm = variance_at(eta, x, omega, Quadrature::Squeezed);
    let vp = variance_at(eta, x, omega, Quadrature::Antisqueezed);
    let (sq, asq) = mix_quadratures(vm, vp, phase_noise * phase_noise);
    10.0 * match quad {
        Quadrature::Squeezed => sq,
        Quadrature::Antisqueezed => asq,
    }
    .log10()
}

/// Squeezing / anti-squeezing (dB) versus pump power at one sideband, with
/// additive Gaussian noise of `noise_db`; sigmas are `sigma_db`.
#[allow(clippy::too_many_arguments)]
pub fn squeezing_dataset(
    eta: f64,
    p_threshold: f64,
    hwhm: f64,
    phase_noise: f64,
    f_sideband: f64,
    powers: &[f64],
    noise_db: f64,
    sigma_db: f64,
    seed: u64,
) -> Result<(DataSeries, DataSeries)> {
    let mut r = rng(seed);
    let omega = f_sideband / hwhm;
    let mut sq = Vec::new();
    let mut asq = Vec::new();
    for &p in powers {
        let x = (p / p_threshold).sqrt();
        sq.push(observed_variance_db(eta, x, omega, phase_noise, Quadrature::Squeezed) + noise_db * normal(&mut r));
        asq.push(
            observed_variance_db(eta, x, omega, phase_noise, Quadrature::Antisqueezed) + noise_db * normal(&mut r),
        );
    }
    Ok((
        DataSeries::with_uniform_sigma(powers.to_vec(), sq, sigma_db)?,
        DataSeries::with_uniform_sigma(powers.to_vec(), asq, sigma_db)?,
    ))
}

/// Squeezing / anti-squeezing spectra (dB) at pump ratio `p / p_th`.
#[allow(clippy::too_many_arguments)]
pub fn spectrum_dataset(
    eta: f64,
    p_over_pth: f64,
    hwhm: f64,
    phase_noise: f64,
    freqs: &[f64],
    noise_db: f64,
    sigma_db: f64,
    seed: u64,
) -> Result<(DataSeries, DataSeries)> {
    let mut r = rng(seed);
    let x = p_over_pth.sqrt();
    let mut sq = Vec::new();
    let mut asq = Vec::new();
    for &f in freqs {
        sq.push(observed_variance_db(eta, x, f / hwhm, phase_noise, Quadrature::Squeezed) + noise_db * normal(&mut r));
        asq.push(
            observed_variance_db(eta, x, f / hwhm, phase_noise, Quadrature::Antisqueezed) + noise_db * normal(&mut r),
        );
    }
    Ok((
        DataSeries::with_uniform_sigma(freqs.to_vec(), sq, sigma_db)?,
        DataSeries::with_uniform_sigma(freqs.to_vec(), asq, sigma_db)?,
    ))
}

/// Resonance shift (Hz) versus power for a linear slope (Hz/W) with
/// Gaussian noise `noise_hz`.
pub fn shift_dataset(slope: f64, powers: &[f64], noise_hz: f64, seed: u64) -> Result<DataSeries> {
    let mut r = rng(seed);
    let y = powers.iter().map(|&p| slope * p + noise_hz * normal(&mut r)).collect();
    DataSeries::with_uniform_sigma(powers.to_vec(), y, noise_hz.max(f64::MIN_POSITIVE))
}
