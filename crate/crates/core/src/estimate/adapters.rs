use super::{
    fit_least_squares, linfit, phase_noise_from_variance, Bound, DataSeries, DerivedValue, FitOptions, FitReport,
    Model, ParamSpec,
};
use crate::photorefraction::{coefficient_from_shift_slope, effective_pump_ratio};
use crate::sqz_model::{invert_pair, linear_from_db, mix_quadratures, variance_at, Quadrature};
use crate::Result;

/// Default 1σ error of a variance point, dB.
pub const DEFAULT_VARIANCE_SIGMA_DB: f64 = 0.09;
/// Default relative 1σ error of a gain point.
pub const DEFAULT_GAIN_REL_SIGMA: f64 = 0.02;

/// Observed quadrature variance in dB, with phase-angle variance `q`.
fn observed_db(eta: f64, x: f64, omega: f64, q: f64, quad: Quadrature) -> f64 {
    if !(0.0..1.0).contains(&x) {
        return f64::NAN;
    }
    let vm = variance_at(eta, x, omega, Quadrature::Squeezed);
    let vp = variance_at(eta, x, omega, Quadrature::Antisqueezed);
    let (sq, asq) = mix_quadratures(vm, vp, q);
    let v = match quad {
        Quadrature::Squeezed => sq,
        Quadrature::Antisqueezed => asq,
    };
    if v > 0.0 {
        10.0 * v.log10()
    } else {
        f64::NAN
    }
}

/// Classical (de)amplification versus pump power.
///
/// Parameters: `[p_threshold]`. Series 0 is the amplified branch, series 1
/// the deamplified one. The optional phase-matching correction maps pump
/// power to the relative conversion efficiency at that power.
pub struct GainModel<'a> {
    pub pm_correction: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
}

impl Model for GainModel<'_> {
    fn predict(&self, series: usize, p: f64, params: &[f64]) -> f64 {
        let p_th = params[0];
        if !(p_th > 0.0) || p < 0.0 {
            return f64::NAN;
        }
        let mut x = (p / p_th).sqrt();
        if let Some(pm) = self.pm_correction {
            x = effective_pump_ratio(x, pm(p));
        }
        match series {
            0 if x < 1.0 => 1.0 / ((1.0 - x) * (1.0 - x)),
            0 => f64::NAN,
            _ => 1.0 / ((1.0 + x) * (1.0 + x)),
        }
    }
}

/// Quadrature variances (dB) versus pump power at a fixed sideband.
///
/// Parameters: `[eta_total, p_threshold, phase_var]`; series `i` measures
/// `quads[i]`.
pub struct QuadratureSeriesModel {
    pub quads: Vec<Quadrature>,
    pub omega: f64,
}

impl Model for QuadratureSeriesModel {
    fn predict(&self, series: usize, p: f64, params: &[f64]) -> f64 {
        let x = (p / params[1]).sqrt();
        observed_db(params[0], x, self.omega, params[2], self.quads[series])
    }
}

/// Squeezing (series 0) and anti-squeezing (series 1) spectra in dB at a
/// fixed pump ratio.
///
/// Parameters: `[eta_total, hwhm, phase_var]`.
pub struct SpectrumModel {
    pub x: f64,
}

impl Model for SpectrumModel {
    fn predict(&self, series: usize, f: f64, params: &[f64]) -> f64 {
        let quad = if series == 0 {
            Quadrature::Squeezed
        } else {
            Quadrature::Antisqueezed
        };
        observed_db(params[0], self.x, f / params[1], params[2], quad)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Simultaneous fit of the amplified and deamplified classical gain.
pub fn fit_gain(
    amp: &DataSeries,
    deamp: &DataSeries,
    pm_correction: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<FitReport> {
    let model = GainModel { pm_correction };
    let max_p = amp.x().iter().chain(deamp.x()).copied().fold(0.0, f64::max);
    let guesses = amp
        .points()
        .filter(|&(p, g, _)| p > 0.0 && g > 1.0)
        .map(|(p, g, _)| {
            let mut x = 1.0 - 1.0 / g.sqrt();
            if let Some(pm) = pm_correction {
                x /= pm(p).max(1e-6).sqrt();
            }
            p / (x * x)
        })
        .collect();
    let init = median(guesses).unwrap_or(2.0 * max_p).max(1.2 * max_p);
    let specs = [ParamSpec::new("p_threshold", init, Bound::Positive)];
    let mut rep = fit_least_squares(&model, &specs, &[amp.clone(), deamp.clone()], &FitOptions::default())?;
    if pm_correction.is_some() {
        rep.notes
            .push("pump ratio corrected by the phase-matching efficiency".into());
    }
    Ok(rep)
}

/// Shared-parameter fit of quadrature-variance series versus pump power.
///
/// With `fixed_phase_noise` the phase noise is held at that value (rad);
/// otherwise the angle variance `phase_var` is fitted and the phase-noise
/// standard deviation is reported as a derived value.
pub fn fit_quadrature_series(
    series: &[(Quadrature, &DataSeries)],
    f_sideband: f64,
    hwhm: f64,
    fixed_phase_noise: Option<f64>,
) -> Result<FitReport> {
    let model = QuadratureSeriesModel {
        quads: series.iter().map(|(q, _)| *q).collect(),
        omega: f_sideband / hwhm,
    };
    let data: Vec<DataSeries> = series.iter().map(|(_, d)| (*d).clone()).collect();
    let max_p = data.iter().flat_map(|d| d.x().iter().copied()).fold(0.0, f64::max);

    let extreme = |quad: Quadrature| {
        series
            .iter()
            .filter(|(q, _)| *q == quad)
            .flat_map(|(_, d)| d.points())
            .fold(None, |best: Option<(f64, f64)>, (p, y, _)| match (quad, best) {
                (_, None) => Some((p, y)),
                (Quadrature::Squeezed, Some(b)) if y < b.1 => Some((p, y)),
                (Quadrature::Antisqueezed, Some(b)) if y > b.1 => Some((p, y)),
                (_, b) => b,
            })
    };
    let (mut eta0, mut pth0) = (0.5, 2.0 * max_p);
    if let (Some((_, sq)), Some((p, asq))) = (extreme(Quadrature::Squeezed), extreme(Quadrature::Antisqueezed)) {
        if let Ok((e, x)) = invert_pair(linear_from_db(sq), linear_from_db(asq)) {
            eta0 = e.clamp(0.02, 0.98);
            pth0 = p / (x * x);
        }
    }
    pth0 = pth0.max(1.2 * max_p);

    let phase = match fixed_phase_noise {
        Some(s) => ParamSpec::fixed("phase_var", s * s),
        None => ParamSpec::new("phase_var", 1e-4, Bound::Free),
    };
    let specs = [
        ParamSpec::new("eta_total", eta0, Bound::Unit),
        ParamSpec::new("p_threshold", pth0, Bound::Positive),
        phase,
    ];
    let mut rep = fit_least_squares(&model, &specs, &data, &FitOptions::default())?;
    attach_phase_noise(&mut rep, fixed_phase_noise);
    rep.derived.push(DerivedValue {
        name: "pump_ratio_at_max_power".into(),
        value: (max_p / rep.value("p_threshold").unwrap_or(f64::NAN)).sqrt(),
        stderr: 0.5
            * (max_p / rep.value("p_threshold").unwrap_or(f64::NAN)).sqrt()
            * rep.error("p_threshold").unwrap_or(f64::NAN)
            / rep.value("p_threshold").unwrap_or(f64::NAN),
    });
    Ok(rep)
}

/// Simultaneous fit of squeezing and anti-squeezing versus pump power.
pub fn fit_squeezing_pair(
    sq: &DataSeries,
    asq: &DataSeries,
    f_sideband: f64,
    hwhm: f64,
    fixed_phase_noise: Option<f64>,
) -> Result<FitReport> {
    fit_quadrature_series(
        &[(Quadrature::Squeezed, sq), (Quadrature::Antisqueezed, asq)],
        f_sideband,
        hwhm,
        fixed_phase_noise,
    )
}

fn attach_phase_noise(rep: &mut FitReport, fixed: Option<f64>) {
    match fixed {
        Some(s) => rep.derived.push(DerivedValue {
            name: "phase_noise".into(),
            value: s,
            stderr: 0.0,
        }),
        None => {
            let q = rep.value("phase_var").unwrap_or(0.0);
            let e = rep.error("phase_var").unwrap_or(0.0);
            rep.derived.push(phase_noise_from_variance(q, e));
        }
    }
}

/// Simultaneous fit of squeezing and anti-squeezing spectra at a known
/// pump ratio `p / p_th`.
pub fn fit_spectrum(
    sq: &DataSeries,
    asq: &DataSeries,
    p_over_pth: f64,
    fixed_phase_noise: Option<f64>,
) -> Result<FitReport> {
    let x = p_over_pth.max(0.0).sqrt();
    let model = SpectrumModel { x };

    let (f0, y0) = asq.points().next().map(|(f, y, _)| (f, y)).unwrap_or((0.0, 0.0));
    let excess0 = linear_from_db(y0) - 1.0;
    let eta0 = (excess0 * (1.0 - x).powi(2) / (4.0 * x.max(1e-6))).clamp(0.02, 0.98);
    let f_half = asq
        .points()
        .find(|&(_, y, _)| linear_from_db(y) - 1.0 < 0.5 * excess0)
        .map(|(f, _, _)| f)
        .unwrap_or_else(|| asq.x()[asq.len() - 1]);
    let hwhm0 = (f_half / (1.0 - x).max(0.05)).max(f0.max(1.0));

    let phase = match fixed_phase_noise {
        Some(s) => ParamSpec::fixed("phase_var", s * s),
        None => ParamSpec::new("phase_var", 1e-4, Bound::Free),
    };
    let specs = [
        ParamSpec::new("eta_total", eta0, Bound::Unit),
        ParamSpec::new("hwhm", hwhm0, Bound::Positive),
        phase,
    ];
    let mut rep = fit_least_squares(&model, &specs, &[sq.clone(), asq.clone()], &FitOptions::default())?;
    let (h, he) = (
        rep.value("hwhm").unwrap_or(f64::NAN),
        rep.error("hwhm").unwrap_or(f64::NAN),
    );
    rep.derived.push(DerivedValue {
        name: "fwhm".into(),
        value: 2.0 * h,
        stderr: 2.0 * he,
    });
    attach_phase_noise(&mut rep, fixed_phase_noise);
    Ok(rep)
}

/// Straight-line fit of resonance shift (Hz) versus pump power (W), with
/// the photorefraction coefficient reported as a derived value.
pub fn fit_shift(data: &DataSeries, n_eff: f64) -> Result<FitReport> {
    let mut rep = linfit(data)?;
    let slope = rep.values[0];
    let coefficient = coefficient_from_shift_slope(slope, n_eff);
    let err = (coefficient_from_shift_slope(rep.stderr[0], n_eff)).abs();
    rep.derived.push(DerivedValue {
        name: "c_pr".into(),
        value: coefficient,
        stderr: err,
    });
    rep.notes.push(format!(
        "photorefraction coefficient taken as index change per watt with n_eff = {n_eff}"
    ));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{grid_oracle, lattice, GridAxis};
    use crate::synthetic::{gain_dataset, shift_dataset, spectrum_dataset, squeezing_dataset};
    use crate::Error;

    fn powers(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn gain_noiseless_exact() {
        let (a, d) = gain_dataset(0.060, &powers(0.001, 0.030, 12), 0.0, 1, None).unwrap();
        let rep = fit_gain(&a, &d, None).unwrap();
        assert!((rep.value("p_threshold").unwrap() - 0.060).abs() < 1e-9);
    }

    #[test]
    fn gain_with_phase_matching_drift() {
        let pm = |p: f64| 1.0 - 4.0 * p;
        let (a, d) = gain_dataset(0.060, &powers(0.001, 0.040, 15), 0.02, 3, Some(&pm)).unwrap();
        let rep = fit_gain(&a, &d, Some(&pm)).unwrap();
        let (v, e) = (rep.value("p_threshold").unwrap(), rep.error("p_threshold").unwrap());
        assert!((v - 0.060).abs() < 2.0 * e, "{v} ± {e}");
        assert!(rep.notes.iter().any(|n| n.contains("phase-matching")));
    }

    #[test]
    fn squeezing_pair_noiseless_recovery() {
        let ps = powers(0.003, 0.030, 10);
        let (sq, asq) = squeezing_dataset(0.62, 0.060, 100e6, 0.020, 5e6, &ps, 0.0, 0.09, 1).unwrap();
        let rep = fit_squeezing_pair(&sq, &asq, 5e6, 100e6, None).unwrap();
        assert!((rep.value("eta_total").unwrap() - 0.62).abs() < 1e-6);
        assert!((rep.value("p_threshold").unwrap() - 0.060).abs() < 1e-6);
        assert!((rep.derived("phase_noise").unwrap().value - 0.020).abs() < 1e-6);
    }

    #[test]
    fn single_point_pair_matches_inversion() {
        // the vacuum reference at zero pump carries no information on either parameter
        let sq = DataSeries::with_uniform_sigma(vec![0.0, 0.030], vec![0.0, -3.17], 0.09).unwrap();
        let asq = DataSeries::with_uniform_sigma(vec![0.0, 0.030], vec![0.0, 6.97], 0.09).unwrap();
        let rep = fit_squeezing_pair(&sq, &asq, 0.0, 100e6, Some(0.0)).unwrap();
        let (eta, x) = invert_pair(linear_from_db(-3.17), linear_from_db(6.97)).unwrap();
        let x_fit = (0.030 / rep.value("p_threshold").unwrap()).sqrt();
        assert!((rep.value("eta_total").unwrap() - eta).abs() < 1e-6);
        assert!((x_fit - x).abs() < 1e-6);
        assert!((eta - 0.595).abs() < 0.005 && (x - 0.470).abs() < 0.005);
    }

    #[test]
    fn antisqueezing_alone_is_rank_deficient() {
        let asq = DataSeries::with_uniform_sigma(vec![0.0, 0.030], vec![0.0, 6.97], 0.09).unwrap();
        let err = fit_quadrature_series(&[(Quadrature::Antisqueezed, &asq)], 0.0, 100e6, Some(0.0)).unwrap_err();
        match err {
            Error::RankDeficient { combination } => {
                assert!(combination.contains("eta_total") && combination.contains("p_threshold"))
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn antisqueezing_series_is_poorly_conditioned() {
        let ps = powers(0.001, 0.004, 6);
        let (_, asq) = squeezing_dataset(0.62, 0.060, 100e6, 0.0, 0.0, &ps, 0.0, 0.09, 1).unwrap();
        let rep = fit_quadrature_series(&[(Quadrature::Antisqueezed, &asq)], 0.0, 100e6, Some(0.0)).unwrap();
        let c = &rep.covariance_unscaled;
        let rho = c[0][1] / (c[0][0] * c[1][1]).sqrt();
        assert!(rho > 0.99, "{rho}");
    }

    #[test]
    fn spectrum_round_trip() {
        let f = powers(2e6, 600e6, 300);
        let (sq, asq) = spectrum_dataset(0.62, 0.5, 100e6, 0.020, &f, 0.1, 0.1, 7).unwrap();
        let rep = fit_spectrum(&sq, &asq, 0.5, None).unwrap();
        let fwhm = rep.derived("fwhm").unwrap().value;
        assert!((fwhm - 200e6).abs() < 10e6, "{fwhm}");
    }

    #[test]
    fn spectrum_without_phase_noise_reports_none() {
        let f = powers(2e6, 600e6, 300);
        let (sq, asq) = spectrum_dataset(0.62, 0.5, 100e6, 0.0, &f, 0.1, 0.1, 11).unwrap();
        let rep = fit_spectrum(&sq, &asq, 0.5, None).unwrap();
        let q = rep.value("phase_var").unwrap();
        let e = rep.error("phase_var").unwrap();
        assert!(q.abs() < 2.0 * e, "{q} ± {e}");
    }

    #[test]
    fn flat_spectrum_is_rank_deficient() {
        let f = powers(2e6, 600e6, 50);
        let z = vec![0.0; 50];
        let sq = DataSeries::with_uniform_sigma(f.clone(), z.clone(), 0.09).unwrap();
        let asq = DataSeries::with_uniform_sigma(f, z, 0.09).unwrap();
        let err = fit_spectrum(&sq, &asq, 0.5, None).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
    }

    #[test]
    fn shift_recovers_coefficient() {
        let slope = crate::photorefraction::shift_per_watt(-3.97e-3, 2.14);
        let data = shift_dataset(slope, &powers(0.0, 0.030, 11), 1e7, 5).unwrap();
        let rep = fit_shift(&data, 2.14).unwrap();
        let c = rep.derived("c_pr").unwrap();
        assert!((c.value + 3.97e-3).abs() < 2.0 * c.stderr);
    }

    #[test]
    fn squeezing_pair_agrees_with_grid() {
        let ps = powers(0.003, 0.030, 8);
        let (sq, asq) = squeezing_dataset(0.62, 0.060, 100e6, 0.0, 5e6, &ps, 0.05, 0.09, 2).unwrap();
        let rep = fit_squeezing_pair(&sq, &asq, 5e6, 100e6, Some(0.0)).unwrap();
        let model = QuadratureSeriesModel {
            quads: vec![Quadrature::Squeezed, Quadrature::Antisqueezed],
            omega: 0.05,
        };
        let (e, p) = (rep.value("eta_total").unwrap(), rep.value("p_threshold").unwrap());
        let ge = lattice(e - 0.05, e + 0.05, 51);
        let gp = lattice(p - 0.005, p + 0.005, 51);
        let cell = [ge[1] - ge[0], gp[1] - gp[0]];
        let grid = [
            GridAxis::new("eta_total", ge),
            GridAxis::new("p_threshold", gp),
            GridAxis::fixed("phase_var", 0.0),
        ];
        let best = grid_oracle(&model, &grid, &[sq, asq]).unwrap();
        assert!((best[0] - e).abs() <= cell[0] && (best[1] - p).abs() <= cell[1]);
    }
}
