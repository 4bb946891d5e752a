use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::estimate::DataSeries;
use crate::{Error, Result};

/// SNR reports are capped here; beyond it the noise estimate is numerical
/// round-off.
pub const SNR_CAP_DB: f64 = 200.0;

/// Powers below this are reported at this level so that the dB values stay
/// finite.
const POWER_FLOOR: f64 = 1e-300;

/// Equivalent noise bandwidth of the periodic Hann window, in bins.
const HANN_ENBW_BINS: f64 = 1.5;

/// Welch power spectrum in dB, Hann window, 50 % overlap.
///
/// The segment length is chosen so that the equivalent noise bandwidth
/// equals `rbw`, and powers are scaled per resolution bandwidth: a sine of
/// amplitude `A` centred on a bin reads `A²/2`. Each point's sigma is the
/// standard deviation of a single bin estimate in dB.
pub fn periodogram(trace: &[f64], sample_rate: f64, rbw: f64) -> Result<DataSeries> {
    if !(rbw > 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidParameters("rbw and sample_rate must be positive".into()));
    }
    let n = (HANN_ENBW_BINS * sample_rate / rbw).round() as usize;
    if n < 4 || trace.len() < n {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            segment: n,
        });
    }
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let wsum: f64 = window.iter().sum();
    let hop = n / 2;
    let segments = (trace.len() - n) / hop + 1;

    let fft = FftPlanner::new().plan_fft_forward(n);
    let half = n / 2 + 1;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let seg = &trace[s * hop..s * hop + n];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf[..half]) {
            *a += b.norm_sqr();
        }
    }
    let scale = 2.0 / (wsum * wsum * segments as f64);
    let freq: Vec<f64> = (0..half).map(|k| k as f64 * sample_rate / n as f64).collect();
    let db: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            // DC and Nyquist bins are not doubled in a one-sided spectrum
            let p = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                a * scale / 2.0
            } else {
                a * scale
            };
            10.0 * p.max(POWER_FLOOR).log10()
        })
        .collect();
    let bin_std_db = 10.0 / std::f64::consts::LN_10 / (segments as f64).sqrt();
    DataSeries::with_uniform_sigma(freq, db, bin_std_db)
}

/// Signal-to-noise ratio of one spectral line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub db: f64,
    /// The noise estimate was at round-off level and `db` is [`SNR_CAP_DB`].
    pub capped: bool,
}

/// Power of the bin nearest `f_signal` over the median power in
/// `noise_band`, in dB.
pub fn snr(spectrum: &DataSeries, f_signal: f64, noise_band: [f64; 2]) -> Result<Snr> {
    let x = spectrum.x();
    if !(f_signal >= x[0] && f_signal <= x[x.len() - 1]) {
        return Err(Error::InvalidParameters(format!(
            "{f_signal} Hz is outside the spectrum"
        )));
    }
    let lin = |db: f64| 10f64.powf(db / 10.0);
    let (_, peak_db, _) = spectrum
        .points()
        .min_by(|a, b| (a.0 - f_signal).abs().total_cmp(&(b.0 - f_signal).abs()))
        .expect("spectrum has at least two points");
    let mut band: Vec<f64> = spectrum
        .points()
        .filter(|&(f, _, _)| f >= noise_band[0] && f <= noise_band[1])
        .map(|(_, y, _)| lin(y))
        .collect();
    if band.is_empty() {
        return Err(Error::EmptyNoiseBand);
    }
    band.sort_by(f64::total_cmp);
    let median = band[band.len() / 2];
    let db = 10.0 * (lin(peak_db) / median).log10();
    if db > SNR_CAP_DB {
        return Ok(Snr {
            db: SNR_CAP_DB,
            capped: true,
        });
    }
    Ok(Snr { db, capped: false })
}
