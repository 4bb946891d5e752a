//! Squeezing-enhanced phase sensing in a Mach-Zehnder interferometer.
//!
//! The interferometer is held at mid-fringe. Its input is amplitude
//! modulated at `am_freq` and the phase signal at `sig_freq` appears as
//! sidebands around that carrier, away from low-frequency classical noise.
//! Squeezed vacuum entering the dark port sets the white noise floor of the
//! balanced photocurrent relative to shot noise.

mod spectrum;

pub use spectrum::{periodogram, snr, Snr, SNR_CAP_DB};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::estimate::DataSeries;
use crate::sqz_model::{apply_loss, QuadratureVariance};
use crate::{Error, Result, OPTICAL_FREQUENCY, PLANCK};

/// Sensing experiment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MziConfig {
    /// Interferometer fringe visibility.
    pub visibility: f64,
    /// W.
    pub input_power: f64,
    /// Amplitude-modulation carrier, Hz.
    pub am_freq: f64,
    /// Phase-signal frequency, Hz.
    pub sig_freq: f64,
    /// Phase-signal amplitude, rad.
    pub sig_depth: f64,
    /// Efficiency from squeezer output to the interferometer dark port,
    /// excluding the visibility.
    pub eta_path: f64,
    /// Hz.
    pub sample_rate: f64,
    /// s.
    pub duration: f64,
    pub seed: u64,
    /// Depth of the amplitude modulation.
    pub am_index: f64,
    /// Squeezing at the source, dB.
    pub source_db: f64,
    /// Resolution bandwidth of the spectra, Hz.
    pub rbw: f64,
    /// Band whose median power is the noise floor, Hz.
    pub noise_band: [f64; 2],
}

impl Default for MziConfig {
    fn default() -> Self {
        Self {
            visibility: 0.94,
            input_power: 1e-3,
            am_freq: 4e6,
            sig_freq: 40e3,
            sig_depth: DEFAULT_SIG_DEPTH,
            eta_path: 0.334,
            sample_rate: 20e6,
            duration: 0.01,
            seed: 1,
            am_index: 0.5,
            source_db: -2.0,
            rbw: 20e3,
            noise_band: [4.1e6, 4.5e6],
        }
    }
}

/// Phase-signal amplitude for which the vacuum run of the default
/// configuration shows [`REFERENCE_SNR_DB`].
pub const DEFAULT_SIG_DEPTH: f64 = 3.3306e-5;

/// Vacuum-run SNR that the default phase signal reproduces, dB.
pub const REFERENCE_SNR_DB: f64 = 8.26;

impl MziConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("input_power", self.input_power),
            ("am_freq", self.am_freq),
            ("sig_freq", self.sig_freq),
            ("sample_rate", self.sample_rate),
            ("duration", self.duration),
            ("rbw", self.rbw),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [
            ("visibility", self.visibility),
            ("eta_path", self.eta_path),
            ("am_index", self.am_index),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.sig_depth >= 0.0 && self.sig_depth.is_finite()) {
            return bad("sig_depth must be non-negative".into());
        }
        if !self.source_db.is_finite() {
            return bad("source_db must be finite".into());
        }
        if self.sig_freq >= self.am_freq / 10.0 {
            return bad("sig_freq must be below am_freq / 10".into());
        }
        if self.am_freq >= self.sample_rate / 4.0 {
            return bad("am_freq must be below sample_rate / 4".into());
        }
        let [lo, hi] = self.noise_band;
        if !(lo < hi && lo >= 0.0 && hi <= self.sample_rate / 2.0) {
            return bad("noise_band must be an increasing interval below Nyquist".into());
        }
        if self.duration * self.sample_rate > crate::locksim::MAX_SAMPLES {
            return bad("duration * sample_rate exceeds the sample cap".into());
        }
        Ok(())
    }

    /// Combined efficiency of the injection path including the visibility.
    pub fn injection_efficiency(&self) -> f64 {
        self.eta_path * self.visibility * self.visibility
    }

    /// Variance reaching the detector for the configured source squeezing.
    pub fn injected(&self) -> QuadratureVariance {
        injected_variance(
            QuadratureVariance::from_db(self.source_db),
            self.eta_path,
            self.visibility,
        )
    }

    /// Mean photon number per sample at the detector.
    pub fn photons_per_sample(&self) -> f64 {
        self.input_power / (self.sample_rate * PLANCK * OPTICAL_FREQUENCY)
    }

    /// Upper phase-signal sideband, Hz.
    pub fn signal_frequency(&self) -> f64 {
        self.am_freq + self.sig_freq
    }
}

/// Variance at the dark port after the injection path and the mode overlap
/// set by the visibility.
pub fn injected_variance(v_source: QuadratureVariance, eta_path: f64, visibility: f64) -> QuadratureVariance {
    apply_loss(v_source, eta_path * visibility * visibility)
}

/// SNR gain at mid-fringe from a noise floor `v_injected` relative to shot
/// noise, dB.
pub fn delta_snr_model(v_injected: QuadratureVariance) -> f64 {
    -v_injected.db()
}

/// Balanced photocurrent in photon counts per sample, kept as its
/// deterministic and stochastic parts.
#[derive(Debug, Clone, PartialEq)]
pub struct MziTrace {
    pub sample_rate: f64,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
}

impl MziTrace {
    pub fn total(&self) -> Vec<f64> {
        self.signal.iter().zip(&self.noise).map(|(s, n)| s + n).collect()
    }
}

/// Detector time series at mid-fringe.
///
/// The signal part is `N·V·(1 + m cos Ωt)·sin(φ(t))` with `φ = depth·sin ωt`,
/// plus a residual carrier `N·m·(1 − V) cos Ωt` from imperfect fringe
/// contrast. The noise part is white with variance `v·N`, `N` being the mean
/// photon number per sample. The noise draws depend only on the seed, so runs
/// differing only in `v_injected` are paired.
pub fn simulate_mzi(config: &MziConfig, v_injected: QuadratureVariance) -> Result<MziTrace> {
    config.validate()?;
    let n = (config.duration * config.sample_rate).round() as usize;
    let nph = config.photons_per_sample();
    let v = config.visibility;
    let m = config.am_index;
    let dt = 1.0 / config.sample_rate;
    let w_am = 2.0 * std::f64::consts::PI * config.am_freq;
    let w_sig = 2.0 * std::f64::consts::PI * config.sig_freq;
    let signal = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let carrier = (w_am * t).cos();
            let phase = config.sig_depth * (w_sig * t).sin();
            nph * v * (1.0 + m * carrier) * phase.sin() + nph * m * (1.0 - v) * carrier
        })
        .collect();
    let sd = (v_injected.value() * nph).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(MziTrace {
        sample_rate: config.sample_rate,
        signal,
        noise,
    })
}

/// Outcome of a vacuum / squeezed pair of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingResult {
    pub snr_vacuum_db: f64,
    pub snr_squeezed_db: f64,
    /// Squeezed noise floor relative to the vacuum floor, dB.
    pub noise_floor_rel_db: f64,
    pub rbw: f64,
    /// Variance reaching the detector in the squeezed run.
    pub v_injected: f64,
    /// Predicted SNR gain.
    pub delta_snr_model_db: f64,
    /// Spectra of the deterministic part agree bit for bit.
    pub signal_bins_identical: bool,
    /// Standard deviation of a single periodogram bin, dB.
    pub floor_bin_std_db: f64,
    pub capped: bool,
}

/// Spectra and summary of a paired run.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub result: SensingResult,
    pub vacuum: DataSeries,
    pub squeezed: DataSeries,
}

fn floor_power(spectrum: &DataSeries, band: [f64; 2]) -> Result<f64> {
    let mut p: Vec<f64> = spectrum
        .points()
        .filter(|&(f, _, _)| f >= band[0] && f <= band[1])
        .map(|(_, y, _)| 10f64.powf(y / 10.0))
        .collect();
    if p.is_empty() {
        return Err(Error::EmptyNoiseBand);
    }
    p.sort_by(f64::total_cmp);
    Ok(p[p.len() / 2])
}

/// Vacuum and squeezed runs with identical seeds and phase signal.
pub fn paired_run(config: &MziConfig) -> Result<PairedRun> {
    let v_inj = config.injected();
    let vac = simulate_mzi(config, QuadratureVariance::VACUUM)?;
    let sq = simulate_mzi(config, v_inj)?;
    let vacuum = periodogram(&vac.total(), config.sample_rate, config.rbw)?;
    let squeezed = periodogram(&sq.total(), config.sample_rate, config.rbw)?;
    let sig_a = periodogram(&vac.signal, config.sample_rate, config.rbw)?;
    let sig_b = periodogram(&sq.signal, config.sample_rate, config.rbw)?;

    let f_sig = config.signal_frequency();
    let snr_v = snr(&vacuum, f_sig, config.noise_band)?;
    let snr_s = snr(&squeezed, f_sig, config.noise_band)?;
    let floor_rel =
        10.0 * (floor_power(&squeezed, config.noise_band)? / floor_power(&vacuum, config.noise_band)?).log10();
    Ok(PairedRun {
        result: SensingResult {
            snr_vacuum_db: snr_v.db,
            snr_squeezed_db: snr_s.db,
            noise_floor_rel_db: floor_rel,
            rbw: config.rbw,
            v_injected: v_inj.value(),
            delta_snr_model_db: delta_snr_model(v_inj),
            signal_bins_identical: sig_a.y() == sig_b.y(),
            floor_bin_std_db: vacuum.sigma()[0],
            capped: snr_v.capped || snr_s.capped,
        },
        vacuum,
        squeezed,
    })
}

/// Vacuum-run SNR at the upper signal sideband, dB.
pub fn vacuum_snr(config: &MziConfig) -> Result<Snr> {
    let trace = simulate_mzi(config, QuadratureVariance::VACUUM)?;
    let spec = periodogram(&trace.total(), config.sample_rate, config.rbw)?;
    snr(&spec, config.signal_frequency(), config.noise_band)
}

/// Phase-signal amplitude giving a vacuum-run SNR of `target_db`, by
/// bisection in log amplitude.
pub fn calibrate_sig_depth(config: &MziConfig, target_db: f64) -> Result<f64> {
    let at = |depth: f64| {
        vacuum_snr(&MziConfig {
            sig_depth: depth,
            ..*config
        })
        .map(|s| s.db)
    };
    let (mut lo, mut hi) = (1e-9_f64, 1e-2_f64);
    if !(at(lo)? < target_db && at(hi)? > target_db) {
        return Err(Error::InvalidParameters(format!(
            "target SNR {target_db} dB is out of reach"
        )));
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if at(mid)? < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqz_model::solve_missing_entry;
    use proptest::prelude::*;

    fn short() -> MziConfig {
        MziConfig {
            duration: 0.002,
            ..MziConfig::default()
        }
    }

    fn bin(spec: &DataSeries, f: f64) -> f64 {
        spec.points()
            .min_by(|a, b| (a.0 - f).abs().total_cmp(&(b.0 - f).abs()))
            .unwrap()
            .1
    }

    #[test]
    fn lossless_injection_is_identity() {
        let v = QuadratureVariance::from_db(-3.17);
        assert_eq!(injected_variance(v, 1.0, 1.0), v);
    }

    #[test]
    fn source_squeezing_degrades_to_half_a_db() {
        let v = MziConfig::default().injected();
        assert!((v.value() - 0.891).abs() < 1e-3, "{}", v.value());
        assert!((v.db() + 0.5).abs() < 0.01);
        // fiber efficiency implied by the endpoints once the visibility is accounted for
        let combined = (1.0 - 0.891) / (1.0 - 0.631);
        let eta = solve_missing_entry(&[("visibility_squared", Some(0.94 * 0.94)), ("fiber", None)], combined).unwrap();
        assert!((eta - 0.334).abs() < 0.005, "{eta}");
    }

    proptest! {
        #[test]
        fn injection_composes(db in -10.0f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let v = QuadratureVariance::from_db(db);
            let twice = injected_variance(injected_variance(v, a, 1.0), b, 1.0);
            let once = injected_variance(v, a * b, 1.0);
            prop_assert!((twice.value() - once.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn snr_gain_model() {
        assert_eq!(delta_snr_model(QuadratureVariance::VACUUM), 0.0);
        assert!((delta_snr_model(QuadratureVariance::new(0.891).unwrap()) - 0.50).abs() < 0.01);
        assert!((delta_snr_model(QuadratureVariance::from_db(-3.17)) - 3.17).abs() < 1e-12);
    }

    #[test]
    fn no_signal_leaves_only_the_carrier() {
        let cfg = MziConfig {
            sig_depth: 0.0,
            ..short()
        };
        let tr = simulate_mzi(&cfg, QuadratureVariance::VACUUM).unwrap();
        let spec = periodogram(&tr.total(), cfg.sample_rate, cfg.rbw).unwrap();
        let floor = 10.0 * floor_power(&spec, cfg.noise_band).unwrap().log10();
        assert!(bin(&spec, 4e6) > floor + 20.0);
        for f in [3.96e6, 4.04e6] {
            assert!((bin(&spec, f) - floor).abs() < 2.0, "{}", bin(&spec, f) - floor);
        }
    }

    #[test]
    fn sidebands_sit_at_carrier_plus_minus_signal() {
        let cfg = MziConfig {
            sig_depth: 1e-3,
            ..short()
        };
        let tr = simulate_mzi(&cfg, QuadratureVariance::VACUUM).unwrap();
        let spec = periodogram(&tr.total(), cfg.sample_rate, cfg.rbw).unwrap();
        let pts: Vec<_> = spectrum_points(&spec, 3.5e6, 4.5e6);
        let mut peaks: Vec<(f64, f64)> = pts
            .windows(3)
            .filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1)
            .map(|w| w[1])
            .collect();
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut top: Vec<f64> = peaks[..3].iter().map(|p| p.0).collect();
        top.sort_by(f64::total_cmp);
        assert_eq!(top, [3.96e6, 4.0e6, 4.04e6]);
    }

    fn spectrum_points(spec: &DataSeries, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        spec.points()
            .filter(|p| p.0 >= lo && p.0 <= hi)
            .map(|p| (p.0, p.1))
            .collect()
    }

    #[test]
    fn paired_runs_share_signal_and_differ_in_floor() {
        let run = paired_run(&MziConfig::default()).unwrap();
        let r = &run.result;
        assert!(r.signal_bins_identical);
        assert!((r.noise_floor_rel_db + 0.5).abs() < 0.1, "{}", r.noise_floor_rel_db);
        assert!((r.noise_floor_rel_db - 10.0 * r.v_injected.log10()).abs() < 0.1);
    }

    #[test]
    fn snr_identity_holds_within_floor_scatter() {
        let r = paired_run(&MziConfig::default()).unwrap().result;
        let residual = r.snr_squeezed_db - r.snr_vacuum_db + r.noise_floor_rel_db;
        assert!(residual.abs() < 2.0 * r.floor_bin_std_db, "{residual}");
    }

    #[test]
    fn calibrated_depth_reproduces_reference_snr() {
        let cfg = MziConfig::default();
        let depth = calibrate_sig_depth(&cfg, REFERENCE_SNR_DB).unwrap();
        assert!((depth / DEFAULT_SIG_DEPTH - 1.0).abs() < 1e-3, "{depth}");
        let r = paired_run(&MziConfig {
            sig_depth: depth,
            ..cfg
        })
        .unwrap()
        .result;
        assert!((r.snr_vacuum_db - REFERENCE_SNR_DB).abs() < 1e-6);
        assert!((r.snr_squeezed_db - 8.7).abs() < 0.3, "{}", r.snr_squeezed_db);
    }

    #[test]
    fn doubling_the_signal_adds_six_db() {
        // well above the floor, where the noise in the signal bin is negligible
        let cfg = MziConfig {
            sig_depth: 30.0 * DEFAULT_SIG_DEPTH,
            ..MziConfig::default()
        };
        let a = vacuum_snr(&cfg).unwrap().db;
        let b = vacuum_snr(&MziConfig {
            sig_depth: 2.0 * cfg.sig_depth,
            ..cfg
        })
        .unwrap()
        .db;
        assert!((b - a - 6.02).abs() < 0.3, "{}", b - a);
    }

    #[test]
    fn runs_are_deterministic() {
        let a = simulate_mzi(&short(), QuadratureVariance::VACUUM).unwrap();
        let b = simulate_mzi(&short(), QuadratureVariance::VACUUM).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            MziConfig {
                sig_freq: 500e3,
                ..MziConfig::default()
            },
            MziConfig {
                am_freq: 6e6,
                ..MziConfig::default()
            },
            MziConfig {
                visibility: 1.5,
                ..MziConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                simulate_mzi(&cfg, QuadratureVariance::VACUUM),
                Err(Error::Config(_))
            ));
        }
    }
}
