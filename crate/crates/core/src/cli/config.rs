use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::locksim::{AlignmentConfig, DriftModel, LockLoopConfig};
use crate::photorefraction::{PhaseMatching, PhotorefractionModel};
use crate::sensing::{MziConfig, REFERENCE_SNR_DB};
use crate::sqz_model::{CavityGeometry, EfficiencyChain, SqueezingModelParams};
use crate::{Error, Result};

/// Schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Settings of the fit commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    /// Sideband frequency of squeezing-versus-power data, Hz.
    pub f_sideband: f64,
    /// Half linewidth assumed by squeezing-versus-power fits, Hz.
    pub hwhm: f64,
    /// Pump ratio P/P_th of spectrum data.
    pub p_over_pth: f64,
    /// Holds the phase noise at this value (rad) instead of fitting it.
    pub fixed_phase_noise: Option<f64>,
    /// Crystal temperature for the phase-matching correction of gain fits,
    /// °C. No correction when absent.
    pub pm_temperature: Option<f64>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            f_sideband: 5e6,
            hwhm: 100e6,
            p_over_pth: 0.5,
            fixed_phase_noise: None,
            pm_temperature: None,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    /// Overrides the seed of every simulation section when present.
    pub seed: Option<u64>,
    /// Directory for emitted tables and reports.
    pub out_dir: String,
    pub geometry: CavityGeometry,
    pub squeezing: SqueezingModelParams,
    pub detection: EfficiencyChain,
    /// Propagation loss of the projected improved waveguide, dB/m.
    pub projection_alpha: f64,
    pub photorefraction: PhotorefractionModel,
    pub phase_matching: PhaseMatching,
    pub fit: FitSettings,
    pub lock: LockLoopConfig,
    pub drift: DriftModel,
    /// Pump power of the single lock run, W.
    pub lock_power: f64,
    /// Pump powers of the instability scan, W, ascending.
    pub scan_powers: Vec<f64>,
    pub alignment: AlignmentConfig,
    pub mzi: MziConfig,
    /// Recalibrates the phase-signal depth to this vacuum SNR (dB) before the
    /// paired run when present.
    pub mzi_calibrate_snr_db: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            out_dir: "out".into(),
            geometry: CavityGeometry::default(),
            squeezing: SqueezingModelParams::default(),
            detection: EfficiencyChain::detection_default(),
            projection_alpha: 2.0,
            photorefraction: PhotorefractionModel::default(),
            phase_matching: PhaseMatching::default(),
            fit: FitSettings::default(),
            lock: LockLoopConfig::default(),
            drift: DriftModel::default(),
            lock_power: 0.005,
            scan_powers: (1..=20).map(|i| i as f64 * 0.0025).collect(),
            alignment: AlignmentConfig::default(),
            mzi: MziConfig::default(),
            mzi_calibrate_snr_db: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Applies the top-level seed to every simulation section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.lock.seed = s;
            self.alignment.seed = s;
            self.mzi.seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        self.geometry.validate()?;
        self.squeezing.validate()?;
        self.detection.validate()?;
        if !(self.projection_alpha >= 0.0) {
            return Err(Error::Config("projection_alpha must be non-negative".into()));
        }
        self.lock.validate()?;
        self.drift.validate()?;
        if !(self.lock_power >= 0.0) {
            return Err(Error::Config("lock_power must be non-negative".into()));
        }
        if self.scan_powers.is_empty() || self.scan_powers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "scan_powers must be non-empty and strictly ascending".into(),
            ));
        }
        self.alignment.validate()?;
        self.mzi.validate()?;
        let f = &self.fit;
        if !(f.hwhm > 0.0 && f.f_sideband >= 0.0 && f.p_over_pth > 0.0 && f.p_over_pth < 1.0) {
            return Err(Error::Config(
                "fit: hwhm > 0, f_sideband >= 0 and 0 < p_over_pth < 1 required".into(),
            ));
        }
        if f.fixed_phase_noise.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::Config("fit.fixed_phase_noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Description of every configuration key, by dotted path.
const KEY_DOCS: &[(&str, &str)] = &[
    ("version", "schema version"),
    ("seed", "seed applied to every simulation section; overridden by --seed"),
    ("out_dir", "output directory; overridden by --out"),
    ("geometry.length", "crystal length, m"),
    (
        "geometry.n_eff",
        "effective refractive index at 1550 nm; not measured, assumed",
    ),
    ("geometry.alpha", "propagation loss, dB/m"),
    ("geometry.r_hr", "power reflectivity of the high reflector"),
    ("geometry.r_pr", "power reflectivity of the output coupler"),
    ("squeezing.eta_total", "total efficiency including escape and detection"),
    ("squeezing.p_threshold", "threshold pump power, W"),
    ("squeezing.hwhm", "cavity half linewidth, Hz"),
    ("squeezing.phase_noise", "phase-noise standard deviation, rad"),
    ("detection", "detection efficiency chain: list of {name, eta}"),
    ("projection_alpha", "propagation loss of the projected waveguide, dB/m"),
    ("photorefraction.c_pr", "photorefractive index change per watt"),
    ("photorefraction.thermo_c", "thermo-optic index change per watt"),
    ("phase_matching.t_pm0", "phase-matching temperature at zero power, °C"),
    ("phase_matching.kappa_t", "mismatch per degree, rad/(m °C); 0 disables"),
    (
        "phase_matching.slope_s",
        "power shift of the phase-matching temperature, °C/W",
    ),
    ("phase_matching.length", "interaction length, m"),
    (
        "fit.f_sideband",
        "sideband frequency of squeezing-versus-power data, Hz",
    ),
    ("fit.hwhm", "half linewidth assumed by squeezing-versus-power fits, Hz"),
    ("fit.p_over_pth", "pump ratio P/P_th of spectrum data"),
    ("fit.fixed_phase_noise", "phase noise held fixed (rad); null fits it"),
    (
        "fit.pm_temperature",
        "crystal temperature for the phase-matching correction of gain fits, °C; null disables",
    ),
    (
        "lock.f_mod",
        "dither frequency, Hz (60e3 cavity lock, 55e3 LO phase lock)",
    ),
    ("lock.mod_depth", "dither amplitude of the cavity round-trip phase, rad"),
    ("lock.demod_phase", "demodulation reference phase, rad"),
    ("lock.lpf_cutoff", "single-pole low-pass corner after the mixer, Hz"),
    ("lock.kp", "proportional gain, per unit normalized error"),
    ("lock.ki", "integral gain, 1/s"),
    ("lock.sample_rate", "simulation rate, Hz"),
    ("lock.duration", "run length, s"),
    ("lock.seed", "random seed"),
    ("lock.record_rate", "trace recording rate, Hz"),
    ("lock.lock_threshold", "lock threshold, fraction of the half linewidth"),
    (
        "lock.lock_hold",
        "minimum time inside the threshold to count as locked, s",
    ),
    (
        "lock.engage_level",
        "transmission below which the controller holds; 0 disables",
    ),
    ("drift.rw_sigma", "detuning random walk, Hz/sqrt(s)"),
    ("drift.ramp", "linear detuning drift, Hz/s"),
    (
        "drift.pr_gain",
        "photorefractive resonance shift per watt of resonant pump, Hz/W",
    ),
    ("drift.pr_tau", "photorefractive relaxation time, s"),
    ("lock_power", "pump power of `simulate lock`, W"),
    ("scan_powers", "pump powers of `simulate instability`, W, ascending"),
    ("alignment.surface.eta_max", "peak fiber coupling"),
    (
        "alignment.surface.width",
        "Gaussian width of the coupling profile, actuator units",
    ),
    (
        "alignment.surface.center_drift",
        "random walk of the optimum per axis, units/sqrt(s)",
    ),
    ("alignment.surface.meas_noise", "relative noise of each power reading"),
    ("alignment.step", "maximum move per tick, actuator units"),
    ("alignment.dither", "probe offset, actuator units"),
    ("alignment.cadence", "ticks per second"),
    ("alignment.duration", "run length, s"),
    ("alignment.seed", "random seed"),
    ("alignment.range", "actuator range, ± units"),
    ("alignment.start", "initial actuator position [x, y]"),
    (
        "alignment.optimizer",
        "run the optimizer; false gives the drift-only control",
    ),
    ("mzi.visibility", "interferometer fringe visibility"),
    ("mzi.input_power", "interferometer input power, W"),
    ("mzi.am_freq", "amplitude-modulation carrier, Hz"),
    ("mzi.sig_freq", "phase-signal frequency, Hz"),
    ("mzi.sig_depth", "phase-signal amplitude, rad"),
    (
        "mzi.eta_path",
        "injection path efficiency excluding visibility (inferred)",
    ),
    ("mzi.sample_rate", "detector sample rate, Hz"),
    ("mzi.duration", "trace length, s"),
    ("mzi.seed", "random seed"),
    ("mzi.am_index", "amplitude-modulation depth"),
    ("mzi.source_db", "squeezing at the source, dB"),
    ("mzi.rbw", "resolution bandwidth, Hz"),
    (
        "mzi.noise_band",
        "band whose median power is the noise floor, [lo, hi] Hz",
    ),
    (
        "mzi_calibrate_snr_db",
        "recalibrate sig_depth to this vacuum SNR (dB); null keeps sig_depth",
    ),
];

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// Markdown table of every key with its default and meaning.
pub fn reference_markdown() -> String {
    let defaults = serde_json::to_value(RunConfig::default()).expect("configuration serializes");
    let mut keys = Vec::new();
    flatten("", &defaults, &mut keys);
    let mut md = String::from(
        "# sqzlab configuration reference\n\n\
         A configuration is one JSON object. Every key is optional and falls back\n\
         to the default below; unknown keys are rejected. Powers are in W,\n\
         frequencies in Hz and variances relative to shot noise.\n\n\
         | key | default | meaning |\n|---|---|---|\n",
    );
    for (key, value) in keys {
        let doc = KEY_DOCS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).unwrap_or("");
        md.push_str(&format!("| `{key}` | `{value}` | {doc} |\n"));
    }
    md.push_str(&format!(
        "\nThe default `mzi.sig_depth` reproduces a vacuum SNR of {REFERENCE_SNR_DB} dB for seed 1.\n"
    ));
    md
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"geometry": {"alpha": 2.0}, "lock_power": 0.01}"#).unwrap();
        assert_eq!(cfg.geometry.alpha, 2.0);
        assert_eq!(cfg.geometry.r_pr, CavityGeometry::default().r_pr);
        assert_eq!(cfg.lock_power, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"colour": 1}"#,
            r#"{"geometry": {"lenght": 0.01}}"#,
            r#"{"lock": {"gain": 1}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(RunConfig::from_json(r#"{"version": 2}"#).is_err());
    }

    #[test]
    fn every_key_is_documented() {
        let defaults = serde_json::to_value(RunConfig::default()).unwrap();
        let mut keys = Vec::new();
        flatten("", &defaults, &mut keys);
        for (k, _) in &keys {
            assert!(KEY_DOCS.iter().any(|(d, _)| d == k), "undocumented key {k}");
        }
        for (d, _) in KEY_DOCS {
            assert!(keys.iter().any(|(k, _)| k == d), "stale doc entry {d}");
        }
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let cfg = RunConfig::default().with_seed(Some(42));
        assert_eq!((cfg.lock.seed, cfg.alignment.seed, cfg.mzi.seed), (42, 42, 42));
    }
}
