//! Synthetic measurement files shipped in `data/`, regenerated from the
//! measured parameter values.

use super::csvio::{emit_table, Table};
use crate::estimate::DataSeries;
use crate::photorefraction::{shift_per_watt, MEASURED_COEFFICIENT, MEASURED_COEFFICIENT_STDERR};
use crate::synthetic::{gain_dataset, shift_dataset, spectrum_dataset, squeezing_dataset};
use crate::Result;

pub const GAIN_THRESHOLD: f64 = 0.060;
/// Threshold implied by the measured squeezing pair (x ≈ 0.47 at 30 mW); the
/// squeezing fit does not share the gain threshold.
pub const SQUEEZING_THRESHOLD: f64 = 0.136;
pub const ETA_TOTAL: f64 = 0.62;
pub const HWHM: f64 = 100e6;
pub const PHASE_NOISE: f64 = 0.020;
pub const SIDEBAND: f64 = 5e6;
pub const SPECTRUM_PUMP_RATIO: f64 = 0.5;
pub const N_EFF: f64 = 2.14;

fn span(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn pair_table(header: &[&str], a: &DataSeries, b: &DataSeries) -> Table {
    let mut t = Table::new(header);
    for ((x, ya, sa), yb) in a.points().zip(b.y()) {
        t.rows.push(vec![x, ya, *yb, sa]);
    }
    t
}

/// Pump powers of the gain measurement. With 2 % noise this design gives a
/// threshold uncertainty near the measured 1.4 mW.
pub fn gain_powers() -> Vec<f64> {
    span(0.0005, 0.005, 10)
}

/// Sideband frequencies of the spectrum measurement. Dense enough that
/// 0.1 dB noise pins the phase noise to about 2 mrad.
pub fn spectrum_freqs() -> Vec<f64> {
    span(1e6, 300e6, 2001)
}

/// Resonance-shift noise that gives the measured coefficient uncertainty for
/// `powers` with equal weights.
pub fn shift_noise_hz(powers: &[f64]) -> f64 {
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    let sxx: f64 = powers.iter().map(|p| (p - mean).powi(2)).sum();
    shift_per_watt(MEASURED_COEFFICIENT_STDERR, N_EFF).abs() * sxx.sqrt()
}

/// `(file name, contents)` of every bundled dataset.
pub fn bundled_datasets() -> Result<Vec<(&'static str, String)>> {
    let (amp, deamp) = gain_dataset(GAIN_THRESHOLD, &gain_powers(), 0.02, 11, None)?;
    let mut gain = pair_table(&["power_w", "gain_amp", "gain_deamp", "sigma"], &amp, &deamp);
    for row in &mut gain.rows {
        row[3] = 0.02;
    }

    let (sq, asq) = squeezing_dataset(
        ETA_TOTAL,
        SQUEEZING_THRESHOLD,
        HWHM,
        PHASE_NOISE,
        SIDEBAND,
        &span(0.002, 0.030, 15),
        0.09,
        0.09,
        12,
    )?;
    let squeezing = pair_table(&["power_w", "sq_db", "asq_db", "sigma_db"], &sq, &asq);

    let (sq, asq) = spectrum_dataset(
        ETA_TOTAL,
        SPECTRUM_PUMP_RATIO,
        HWHM,
        PHASE_NOISE,
        &spectrum_freqs(),
        0.1,
        0.1,
        13,
    )?;
    let spectrum = pair_table(&["freq_hz", "sq_db", "asq_db", "sigma_db"], &sq, &asq);

    let slope = shift_per_watt(MEASURED_COEFFICIENT, N_EFF);
    let powers = span(0.003, 0.030, 10);
    let shift = shift_dataset(slope, &powers, shift_noise_hz(&powers), 14)?;
    let mut shift_t = Table::new(&["power_w", "shift_hz", "sigma_hz"]);
    shift_t.rows = shift.points().map(|(x, y, s)| vec![x, y, s]).collect();

    let mut two = Table::new(&["power_w", "shift_hz"]);
    two.rows = [0.010, 0.030].iter().map(|&p| vec![p, slope * p]).collect();

    Ok(vec![
        ("gain.csv", emit_table(&gain)),
        ("squeezing.csv", emit_table(&squeezing)),
        ("spectrum.csv", emit_table(&spectrum)),
        ("shift.csv", emit_table(&shift_t)),
        ("shift_two_point.csv", emit_table(&two)),
    ])
}
