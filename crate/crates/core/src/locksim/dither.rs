use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lock_mask, SimTrace, MAX_SAMPLES};
use crate::photorefraction::{shift_per_watt, MEASURED_COEFFICIENT};
use crate::sqz_model::{CavityGeometry, DerivedCavity};
use crate::{Error, Result};

/// Seeds per power in [`instability_scan`].
pub const SCAN_SEEDS: u64 = 8;

/// Dither-lock loop parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockLoopConfig {
    /// Modulation frequency, Hz.
    pub f_mod: f64,
    /// Dither amplitude of the cavity round-trip phase, rad.
    pub mod_depth: f64,
    /// Demodulation reference phase, rad.
    pub demod_phase: f64,
    /// Single-pole low-pass corner after the mixer, Hz.
    pub lpf_cutoff: f64,
    /// Proportional gain, per unit of normalized error.
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
    /// Hz.
    pub sample_rate: f64,
    /// s.
    pub duration: f64,
    pub seed: u64,
    /// Rate at which the trace is recorded, Hz.
    pub record_rate: f64,
    /// Lock threshold as a fraction of the half linewidth.
    pub lock_threshold: f64,
    /// Minimum time inside the threshold to count as locked, s.
    pub lock_hold: f64,
    /// The controller acts only while the low-passed transmission exceeds
    /// this level and holds its output otherwise. Zero disables the gate.
    pub engage_level: f64,
}

impl Default for LockLoopConfig {
    fn default() -> Self {
        Self {
            f_mod: 60e3,
            mod_depth: 0.02,
            demod_phase: 0.0,
            lpf_cutoff: 1e3,
            kp: 0.5,
            ki: 628.0,
            sample_rate: 1e6,
            duration: 2.0,
            seed: 1,
            record_rate: 1e4,
            lock_threshold: 0.1,
            lock_hold: 0.05,
            engage_level: 0.5,
        }
    }
}

impl LockLoopConfig {
    /// Local-oscillator phase lock preset, dithered at 55 kHz.
    pub fn lo_phase_lock() -> Self {
        Self {
            f_mod: 55e3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let positive = [
            ("f_mod", self.f_mod),
            ("mod_depth", self.mod_depth),
            ("lpf_cutoff", self.lpf_cutoff),
            ("sample_rate", self.sample_rate),
            ("duration", self.duration),
            ("record_rate", self.record_rate),
            ("lock_threshold", self.lock_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.kp.is_finite() && self.ki.is_finite() && self.demod_phase.is_finite()) {
            return bad("controller gains and demod_phase must be finite");
        }
        if !(self.lock_hold >= 0.0) {
            return bad("lock_hold must be non-negative");
        }
        if !(0.0..1.0).contains(&self.engage_level) {
            return bad("engage_level must lie in [0, 1)");
        }
        if self.f_mod >= self.sample_rate / 4.0 {
            return bad("f_mod must be below sample_rate / 4");
        }
        if self.lpf_cutoff >= self.f_mod / 10.0 {
            return bad("lpf_cutoff must be below f_mod / 10");
        }
        if self.record_rate > self.sample_rate {
            return bad("record_rate must not exceed sample_rate");
        }
        if self.duration * self.sample_rate > MAX_SAMPLES {
            return bad(&format!(
                "duration * sample_rate = {:.3e} exceeds the cap of {MAX_SAMPLES:.0e} samples",
                self.duration * self.sample_rate
            ));
        }
        Ok(())
    }
}

/// Disturbances acting on the cavity detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    /// Random-walk strength, Hz / sqrt(s).
    pub rw_sigma: f64,
    /// Linear drift, Hz / s.
    pub ramp: f64,
    /// Steady-state resonance blueshift per watt of resonant pump, Hz / W.
    pub pr_gain: f64,
    /// Photorefractive relaxation time, s.
    pub pr_tau: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            rw_sigma: 1e6,
            ramp: 1e6,
            pr_gain: shift_per_watt(MEASURED_COEFFICIENT, CavityGeometry::default().n_eff),
            pr_tau: 0.1,
        }
    }
}

impl DriftModel {
    pub fn none() -> Self {
        Self {
            rw_sigma: 0.0,
            ramp: 0.0,
            pr_gain: 0.0,
            pr_tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rw_sigma >= 0.0 && self.rw_sigma.is_finite()) {
            return Err(Error::Config("rw_sigma must be non-negative".into()));
        }
        if !(self.pr_tau > 0.0 && self.pr_tau.is_finite()) {
            return Err(Error::Config("pr_tau must be positive".into()));
        }
        if !(self.ramp.is_finite() && self.pr_gain.is_finite()) {
            return Err(Error::Config("ramp and pr_gain must be finite".into()));
        }
        Ok(())
    }
}

fn lorentzian(delta: f64, hwhm: f64) -> f64 {
    let u = delta / hwhm;
    1.0 / (1.0 + u * u)
}

/// Frequency excursion of the dither, Hz.
fn excursion(cavity: &DerivedCavity, config: &LockLoopConfig) -> f64 {
    config.mod_depth * cavity.fsr / (2.0 * PI)
}

/// Photodetector high-pass, mixer and low-pass of the dither lock.
struct Demodulator {
    hwhm: f64,
    excursion: f64,
    hp_alpha: f64,
    lp_beta: f64,
    ref_sin: f64,
    ref_cos: f64,
    hp: f64,
    prev: f64,
    lp: f64,
    /// Low-passed transmission.
    dc: f64,
}

impl Demodulator {
    fn new(cavity: &DerivedCavity, config: &LockLoopConfig) -> Self {
        let dt = 1.0 / config.sample_rate;
        let hp_rc = 1.0 / (2.0 * PI * config.f_mod / 20.0);
        let lp_rc = 1.0 / (2.0 * PI * config.lpf_cutoff);
        let excursion = excursion(cavity, config);
        let (ref_sin, ref_cos) = config.demod_phase.sin_cos();
        Self {
            hwhm: cavity.hwhm,
            excursion,
            hp_alpha: hp_rc / (hp_rc + dt),
            lp_beta: dt / (lp_rc + dt),
            ref_sin,
            ref_cos,
            hp: 0.0,
            prev: lorentzian(excursion, cavity.hwhm),
            lp: 0.0,
            dc: 1.0,
        }
    }

    /// Advances one sample at modulation phase with the given sine and
    /// cosine; returns the normalized error.
    fn step(&mut self, detuning: f64, sin: f64, cos: f64) -> f64 {
        let det = lorentzian(detuning + self.excursion * cos, self.hwhm);
        self.hp = self.hp_alpha * (self.hp + det - self.prev);
        self.prev = det;
        let mixed = self.hp * (cos * self.ref_cos - sin * self.ref_sin);
        self.lp += self.lp_beta * (mixed - self.lp);
        self.dc += self.lp_beta * (det - self.dc);
        -self.lp * self.hwhm / self.excursion
    }
}

/// Time-averaged output of the detection chain at a fixed detuning, with
/// the loop open. Averages over the second half of `duration`.
pub fn open_loop_error(detuning: f64, cavity: &DerivedCavity, config: &LockLoopConfig, duration: f64) -> f64 {
    let n = (duration * config.sample_rate).round() as usize;
    let mut demod = Demodulator::new(cavity, config);
    let step = 2.0 * PI * config.f_mod / config.sample_rate;
    let mut sum = 0.0;
    for k in 0..n {
        let (s, c) = (k as f64 * step).sin_cos();
        let e = demod.step(detuning, s, c);
        if k >= n / 2 {
            sum += e;
        }
    }
    sum / (n - n / 2) as f64
}

/// Static dither-lock error at `detuning`.
///
/// First-harmonic in-phase component of the transmission under a slow
/// frequency dither, normalized so that the slope at resonance is `1 / hwhm`.
/// For a dither much narrower than the line this is
/// `(δ/γ) / (1 + (δ/γ)²)²` with `γ` the half linewidth.
pub fn error_signal(detuning: f64, cavity: &DerivedCavity, config: &LockLoopConfig) -> f64 {
    const N: usize = 64;
    let a = excursion(cavity, config);
    let h = cavity.hwhm;
    // pairing θ with θ + π makes the result exactly odd in the detuning
    let sum: f64 = (0..N / 2)
        .map(|k| {
            let c = (2.0 * PI * k as f64 / N as f64).cos();
            (lorentzian(detuning + a * c, h) - lorentzian(detuning - a * c, h)) * c
        })
        .sum();
    let first_harmonic = 2.0 * sum / N as f64;
    -first_harmonic * h / (2.0 * a) * config.demod_phase.cos()
}

/// Closed-loop dither lock of a cavity under drift and photorefraction.
///
/// The run starts on resonance with a cold photorefractive state. When the
/// photorefractive shift builds faster than the integrator can follow, the
/// transmission drops below the engage level and the controller holds; the
/// shift then relaxes, sweeps the resonance back through the probe and the
/// loop re-engages, so lock loss above a critical power is sustained.
pub fn simulate_cavity_lock(
    cavity: &DerivedCavity,
    config: &LockLoopConfig,
    drift: &DriftModel,
    p_pump: f64,
) -> Result<SimTrace> {
    config.validate()?;
    drift.validate()?;
    if !(cavity.hwhm > 0.0 && cavity.hwhm.is_finite() && cavity.fsr.is_finite()) {
        return Err(Error::Config("cavity hwhm and fsr must be positive and finite".into()));
    }
    if !(p_pump >= 0.0 && p_pump.is_finite()) {
        return Err(Error::Config(format!("pump power must be non-negative, got {p_pump}")));
    }

    let h = cavity.hwhm;
    let dt = 1.0 / config.sample_rate;
    let n = (config.duration * config.sample_rate).round() as usize;
    let decim = (config.sample_rate / config.record_rate).round().max(1.0) as usize;
    let rw_step = drift.rw_sigma * dt.sqrt();
    let pr_target = drift.pr_gain * p_pump;
    let pr_rate = dt / drift.pr_tau;
    let phase_step = 2.0 * PI * config.f_mod * dt;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut demod = Demodulator::new(cavity, config);
    let mut env = 0.0;
    let mut shift = 0.0;
    let mut integ = 0.0;
    let mut u = 0.0;
    let mut phase = 0.0_f64;
    let mut err = 0.0;

    let cap = n / decim + 1;
    let mut trace = SimTrace {
        time: Vec::with_capacity(cap),
        detuning: Vec::with_capacity(cap),
        error: Vec::with_capacity(cap),
        control: Vec::with_capacity(cap),
        coupling: Vec::with_capacity(cap),
        locked: Vec::new(),
    };

    for k in 0..n {
        let delta = env - shift + u;
        if k % decim == 0 {
            trace.time.push(k as f64 * dt);
            trace.detuning.push(delta);
            trace.error.push(err);
            trace.control.push(u);
            trace.coupling.push(f64::NAN);
        }

        let (s, c) = phase.sin_cos();
        err = demod.step(delta, s, c);
        if demod.dc > config.engage_level {
            integ += config.ki * h * err * dt;
            u = -(config.kp * h * err + integ);
        }

        shift += (pr_target * lorentzian(delta, h) - shift) * pr_rate;
        if rw_step > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            env += rw_step * z;
        }
        env += drift.ramp * dt;

        phase += phase_step;
        if phase > PI {
            phase -= 2.0 * PI;
        }
    }

    trace.locked = lock_mask(
        &trace.detuning,
        decim as f64 * dt,
        config.lock_threshold * h,
        config.lock_hold,
    );
    Ok(trace)
}

/// Time fraction locked versus pump power, averaged over [`SCAN_SEEDS`]
/// seeds `config.seed + i`.
pub fn instability_scan(
    cavity: &DerivedCavity,
    config: &LockLoopConfig,
    drift: &DriftModel,
    powers: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if powers.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameters("powers must be sorted ascending".into()));
    }
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..powers.len())
        .flat_map(|i| (0..SCAN_SEEDS).map(move |s| (i, s)))
        .collect();
    let fractions = jobs
        .par_iter()
        .map(|&(i, s)| {
            let cfg = LockLoopConfig {
                seed: config.seed.wrapping_add(s),
                ..*config
            };
            simulate_cavity_lock(cavity, &cfg, drift, powers[i]).map(|t| t.lock_fraction())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(powers
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let chunk = &fractions[i * SCAN_SEEDS as usize..(i + 1) * SCAN_SEEDS as usize];
            (p, chunk.iter().sum::<f64>() / SCAN_SEEDS as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqz_model::derive_cavity;
    use proptest::prelude::*;

    fn cavity() -> DerivedCavity {
        derive_cavity(&CavityGeometry::default()).unwrap()
    }

    fn short() -> LockLoopConfig {
        LockLoopConfig {
            duration: 0.2,
            ..LockLoopConfig::default()
        }
    }

    #[test]
    fn error_zero_on_resonance() {
        assert_eq!(error_signal(0.0, &cavity(), &LockLoopConfig::default()), 0.0);
    }

    #[test]
    fn error_extremum_near_linewidth_over_root_three() {
        let cav = cavity();
        let cfg = LockLoopConfig::default();
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 1..20_000 {
            let d = i as f64 * 1e-4 * cav.hwhm;
            let e = error_signal(d, &cav, &cfg).abs();
            if e > best {
                best = e;
                arg = d;
            }
        }
        let expected = cav.hwhm / 3f64.sqrt();
        assert!((arg / expected - 1.0).abs() < 0.02, "{}", arg / expected);
    }

    #[test]
    fn error_matches_lorentzian_derivative_for_narrow_dither() {
        let cav = cavity();
        let cfg = LockLoopConfig {
            mod_depth: 1e-4,
            ..LockLoopConfig::default()
        };
        for x in [0.05f64, 0.3, 1.0, 2.5] {
            let expected = x / (1.0 + x * x).powi(2);
            let e = error_signal(x * cav.hwhm, &cav, &cfg);
            assert!((e / expected - 1.0).abs() < 1e-6, "{x}: {e} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn error_is_odd(x in -5.0f64..5.0) {
            let cav = cavity();
            let cfg = LockLoopConfig::default();
            let d = x * cav.hwhm;
            prop_assert_eq!(error_signal(-d, &cav, &cfg), -error_signal(d, &cav, &cfg));
        }
    }

    #[test]
    fn demodulator_is_linear_near_resonance() {
        let cav = cavity();
        let cfg = LockLoopConfig::default();
        let slope = open_loop_error(1e-3 * cav.hwhm, &cav, &cfg, 0.02) / 1e-3;
        for x in [-0.09, -0.05, -0.01, 0.02, 0.06, 0.1] {
            let e = open_loop_error(x * cav.hwhm, &cav, &cfg, 0.02);
            assert!((e / (slope * x) - 1.0).abs() < 0.05, "{x}: {}", e / (slope * x));
        }
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn quiet_cavity_stays_locked() {
        let tr = simulate_cavity_lock(&cavity(), &short(), &DriftModel::none(), 0.0).unwrap();
        assert!(tr.locked.iter().all(|&l| l));
        let h = cavity().hwhm;
        // residual ripple of the modulation harmonics through the single-pole low-pass
        let umax = tr.control.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        assert!(umax < 1e-4 * h, "{}", umax / h);
        assert!(tr.detuning.iter().all(|d| d.abs() < 1e-4 * h));
    }

    #[test]
    fn low_power_residual_is_small() {
        let cav = cavity();
        let tr = simulate_cavity_lock(&cav, &LockLoopConfig::default(), &DriftModel::default(), 0.005).unwrap();
        assert!(tr.rms_detuning() < 0.05 * cav.hwhm, "{}", tr.rms_detuning() / cav.hwhm);
        assert!(tr.lock_fraction() > 0.9);
    }

    #[test]
    fn high_power_loses_lock() {
        let tr = simulate_cavity_lock(&cavity(), &LockLoopConfig::default(), &DriftModel::default(), 0.040).unwrap();
        assert!(tr.locked.iter().any(|&l| !l));
        assert!(tr.lock_fraction() < 0.5);
    }

    #[test]
    fn ramp_error_halves_when_integral_gain_doubles() {
        let cav = cavity();
        let drift = DriftModel {
            ramp: 1e8,
            ..DriftModel::none()
        };
        let lag = |ki: f64| {
            let cfg = LockLoopConfig {
                ki,
                duration: 0.5,
                ..LockLoopConfig::default()
            };
            let tr = simulate_cavity_lock(&cav, &cfg, &drift, 0.0).unwrap();
            let tail = &tr.detuning[tr.len() / 2..];
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        let (e1, e2) = (lag(400.0), lag(800.0));
        assert!((e1 / e2 / 2.0 - 1.0).abs() < 0.1, "{e1} {e2}");
        // steady-state lag of a type-1 loop: ramp / ki in units of the normalized slope
        assert!((e1 / (1e8 / 400.0) - 1.0).abs() < 0.1, "{e1}");
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = LockLoopConfig { seed: 7, ..short() };
        let a = simulate_cavity_lock(&cavity(), &cfg, &DriftModel::default(), 0.01).unwrap();
        let b = simulate_cavity_lock(&cavity(), &cfg, &DriftModel::default(), 0.01).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let c = simulate_cavity_lock(
            &cavity(),
            &LockLoopConfig { seed: 8, ..cfg },
            &DriftModel::default(),
            0.01,
        )
        .unwrap();
        assert_ne!(a.detuning, c.detuning);
    }

    #[test]
    fn scan_without_photorefraction_stays_locked() {
        let cfg = LockLoopConfig {
            duration: 0.3,
            ..LockLoopConfig::default()
        };
        let drift = DriftModel {
            pr_gain: 0.0,
            ..DriftModel::default()
        };
        for (_, f) in instability_scan(&cavity(), &cfg, &drift, &[0.01, 0.05]).unwrap() {
            assert!(f > 0.99, "{f}");
        }
    }

    #[test]
    fn scan_aggregates_single_runs() {
        let cfg = LockLoopConfig {
            duration: 0.3,
            seed: 3,
            ..LockLoopConfig::default()
        };
        let drift = DriftModel::default();
        let scan = instability_scan(&cavity(), &cfg, &drift, &[0.02]).unwrap();
        let mean = (0..SCAN_SEEDS)
            .map(|s| {
                let c = LockLoopConfig { seed: 3 + s, ..cfg };
                simulate_cavity_lock(&cavity(), &c, &drift, 0.02)
                    .unwrap()
                    .lock_fraction()
            })
            .sum::<f64>()
            / SCAN_SEEDS as f64;
        assert_eq!(scan[0].1, mean);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cav = cavity();
        let d = DriftModel::default();
        let bad = [
            LockLoopConfig {
                f_mod: 300e3,
                ..LockLoopConfig::default()
            },
            LockLoopConfig {
                lpf_cutoff: 10e3,
                ..LockLoopConfig::default()
            },
            LockLoopConfig {
                duration: 200.0,
                ..LockLoopConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                simulate_cavity_lock(&cav, &cfg, &d, 0.0),
                Err(Error::Config(_))
            ));
        }
        let d = DriftModel { pr_tau: 0.0, ..d };
        assert!(simulate_cavity_lock(&cav, &LockLoopConfig::default(), &d, 0.0).is_err());
        assert!(instability_scan(&cav, &LockLoopConfig::default(), &DriftModel::default(), &[0.02, 0.01]).is_err());
    }
}
