use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SimTrace, MAX_SAMPLES};
use crate::{Error, Result};

/// Fiber-coupling efficiency versus two actuator coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentSurface {
    /// Peak coupling.
    pub eta_max: f64,
    /// Gaussian width, actuator units.
    pub width: f64,
    /// Random-walk strength of the optimum per axis, actuator units / sqrt(s).
    pub center_drift: f64,
    /// Relative noise of each power reading on the monitor tap.
    pub meas_noise: f64,
}

impl Default for AlignmentSurface {
    fn default() -> Self {
        Self {
            eta_max: 0.88,
            width: 1.0,
            center_drift: 0.6,
            meas_noise: 0.01,
        }
    }
}

impl AlignmentSurface {
    pub fn coupling(&self, pos: [f64; 2], center: [f64; 2]) -> f64 {
        let r2 = (pos[0] - center[0]).powi(2) + (pos[1] - center[1]).powi(2);
        self.eta_max * (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Alignment run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub surface: AlignmentSurface,
    /// Maximum move per tick, actuator units.
    pub step: f64,
    /// Probe offset, actuator units.
    pub dither: f64,
    /// Ticks per second.
    pub cadence: f64,
    /// s.
    pub duration: f64,
    pub seed: u64,
    /// Actuators accept coordinates in `[-range, range]`.
    pub range: f64,
    /// Initial actuator position; the optimum starts at the origin.
    pub start: [f64; 2],
    /// With the optimizer off the actuators stay at `start`.
    pub optimizer: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            surface: AlignmentSurface::default(),
            step: 0.5,
            dither: 0.2,
            cadence: 100.0,
            duration: 30.0,
            seed: 1,
            range: 10.0,
            start: [0.0, 0.0],
            optimizer: true,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.surface;
        if !(s.eta_max > 0.0 && s.eta_max <= 1.0) {
            return Err(Error::Config("eta_max must lie in (0, 1]".into()));
        }
        if !(s.width > 0.0 && s.center_drift >= 0.0 && s.meas_noise >= 0.0) {
            return Err(Error::Config(
                "width must be positive, drift and noise non-negative".into(),
            ));
        }
        if !(self.step > 0.0 && self.dither > 0.0) {
            return Err(Error::Config("step and dither must be positive".into()));
        }
        if !(self.cadence > 0.0 && self.duration > 0.0) {
            return Err(Error::Config("cadence and duration must be positive".into()));
        }
        if !(self.range > self.dither) {
            return Err(Error::Config("range must exceed dither".into()));
        }
        if self.start.iter().any(|c| !(c.abs() <= self.range)) {
            return Err(Error::Config("start must lie inside the actuator range".into()));
        }
        if self.cadence * self.duration > MAX_SAMPLES {
            return Err(Error::Config("cadence * duration exceeds the sample cap".into()));
        }
        Ok(())
    }
}

/// Two-axis dither gradient ascent with bounded actuators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentOptimizer {
    pub pos: [f64; 2],
    pub step: f64,
    pub dither: f64,
    pub range: f64,
}

impl AlignmentOptimizer {
    /// One tick: probe `±dither` along each axis, then move by
    /// `step · (P+ − P−) / (P+ + P−)` per axis. Returns the normalized
    /// gradient.
    pub fn tick(&mut self, mut measure: impl FnMut([f64; 2]) -> f64) -> [f64; 2] {
        let lim = self.range - self.dither;
        let mut grad = [0.0; 2];
        for axis in 0..2 {
            let center = self.pos[axis].clamp(-lim, lim);
            let mut probe = self.pos;
            probe[axis] = (center + self.dither).min(self.range);
            let plus = measure(probe);
            probe[axis] = (center - self.dither).max(-self.range);
            let minus = measure(probe);
            let total = plus + minus;
            grad[axis] = if total > 0.0 { (plus - minus) / total } else { 0.0 };
        }
        for (p, g) in self.pos.iter_mut().zip(grad) {
            *p = (*p + self.step * g).clamp(-self.range, self.range);
        }
        grad
    }
}

/// Alignment run on a drifting surface, one trace row per tick.
///
/// `coupling` is the true efficiency at the actuator position after the
/// tick, `error` the magnitude of the normalized gradient and `control` the
/// distance of the actuators from the origin.
pub fn simulate_alignment(config: &AlignmentConfig) -> Result<SimTrace> {
    config.validate()?;
    let surface = config.surface;
    let ticks = (config.duration * config.cadence).round() as usize;
    let dt = 1.0 / config.cadence;
    let walk = surface.center_drift * dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let mut center = [0.0; 2];
    let mut opt = AlignmentOptimizer {
        pos: config.start,
        step: config.step,
        dither: config.dither,
        range: config.range,
    };
    let mut trace = SimTrace::default();
    for k in 0..ticks {
        // drawn whether or not the optimizer runs, so the optimum follows the
        // same path in both cases
        let mut noise = [0.0; 4];
        noise.iter_mut().for_each(|z| *z = normal());
        let grad = if config.optimizer {
            let mut i = 0;
            opt.tick(|p| {
                let reading = surface.coupling(p, center) * (1.0 + surface.meas_noise * noise[i]);
                i += 1;
                reading
            })
        } else {
            [0.0; 2]
        };
        center[0] += walk * normal();
        center[1] += walk * normal();

        trace.time.push((k + 1) as f64 * dt);
        trace.detuning.push(f64::NAN);
        trace.error.push(grad[0].hypot(grad[1]));
        trace.control.push(opt.pos[0].hypot(opt.pos[1]));
        trace.coupling.push(surface.coupling(opt.pos, center));
        trace.locked.push(false);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_surface() -> AlignmentSurface {
        AlignmentSurface {
            center_drift: 0.0,
            ..AlignmentSurface::default()
        }
    }

    #[test]
    fn converges_from_two_widths() {
        let s = static_surface();
        let off = std::f64::consts::SQRT_2 * s.width;
        let cfg = AlignmentConfig {
            surface: s,
            duration: 2.0,
            start: [off, off],
            ..AlignmentConfig::default()
        };
        let tr = simulate_alignment(&cfg).unwrap();
        assert_eq!(tr.len(), 200);
        assert!(tr.final_coupling() >= 0.99 * s.eta_max, "{}", tr.final_coupling());
    }

    #[test]
    fn stationary_at_optimum_without_noise() {
        let s = AlignmentSurface {
            meas_noise: 0.0,
            ..static_surface()
        };
        let cfg = AlignmentConfig {
            surface: s,
            duration: 1.0,
            ..AlignmentConfig::default()
        };
        let tr = simulate_alignment(&cfg).unwrap();
        assert!(tr.error.iter().all(|g| g.abs() < 1e-12));
        assert!(tr.control.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn tracks_drifting_optimum() {
        let on = simulate_alignment(&AlignmentConfig::default()).unwrap();
        let off = simulate_alignment(&AlignmentConfig {
            optimizer: false,
            ..AlignmentConfig::default()
        })
        .unwrap();
        let eta = AlignmentSurface::default().eta_max;
        assert!(on.mean_coupling() >= 0.95 * eta, "{}", on.mean_coupling() / eta);
        assert!(off.final_coupling() < 0.5 * eta, "{}", off.final_coupling() / eta);
    }

    #[test]
    fn probes_stay_in_bounds_and_drive_the_move() {
        let mut opt = AlignmentOptimizer {
            pos: [9.95, -9.95],
            step: 0.5,
            dither: 0.2,
            range: 10.0,
        };
        let mut probes = Vec::new();
        let before = opt.pos;
        let grad = opt.tick(|p| {
            probes.push(p);
            1.0 + 0.1 * probes.len() as f64
        });
        assert_eq!(probes.len(), 4);
        assert!(probes.iter().flatten().all(|c| c.abs() <= 10.0));
        let expected = [(1.1 - 1.2) / 2.3, (1.3 - 1.4) / 2.7];
        assert_eq!(grad, expected);
        for axis in 0..2 {
            let moved = (before[axis] + 0.5 * expected[axis]).clamp(-10.0, 10.0);
            assert_eq!(opt.pos[axis], moved);
        }
    }

    #[test]
    fn deterministic() {
        let a = simulate_alignment(&AlignmentConfig::default()).unwrap();
        let b = simulate_alignment(&AlignmentConfig::default()).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(simulate_alignment(&AlignmentConfig {
            step: 0.0,
            ..AlignmentConfig::default()
        })
        .is_err());
        assert!(simulate_alignment(&AlignmentConfig {
            start: [20.0, 0.0],
            ..AlignmentConfig::default()
        })
        .is_err());
    }
}
