use serde::Serialize;

/// Time-indexed record of a loop simulation.
///
/// Lock runs leave `coupling` as NaN; alignment runs leave `detuning` as NaN
/// and are never marked locked.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimTrace {
    pub time: Vec<f64>,
    /// Hz.
    pub detuning: Vec<f64>,
    pub error: Vec<f64>,
    pub control: Vec<f64>,
    pub coupling: Vec<f64>,
    pub locked: Vec<bool>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn lock_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.locked.iter().filter(|&&l| l).count() as f64 / self.len() as f64
    }

    /// Root-mean-square detuning over the finite samples.
    pub fn rms_detuning(&self) -> f64 {
        let v: Vec<f64> = self.detuning.iter().copied().filter(|d| d.is_finite()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        (v.iter().map(|d| d * d).sum::<f64>() / v.len() as f64).sqrt()
    }

    pub fn mean_coupling(&self) -> f64 {
        let v: Vec<f64> = self.coupling.iter().copied().filter(|c| c.is_finite()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn final_coupling(&self) -> f64 {
        self.coupling.last().copied().unwrap_or(f64::NAN)
    }
}

/// Marks samples belonging to runs with `|detuning| < threshold` lasting at
/// least `hold` seconds, for samples spaced `dt` apart.
pub fn lock_mask(detuning: &[f64], dt: f64, threshold: f64, hold: f64) -> Vec<bool> {
    let min_len = ((hold / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut mask = vec![false; detuning.len()];
    let mut start = 0;
    for i in 0..=detuning.len() {
        let inside = i < detuning.len() && detuning[i].abs() < threshold;
        if !inside {
            if i - start >= min_len {
                mask[start..i].iter_mut().for_each(|m| *m = true);
            }
            start = i + 1;
        }
    }
    mask
}
