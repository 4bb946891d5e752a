use std::path::{Path, PathBuf};

use super::csvio::{emit_table, emit_trace, parse_table, Table};
use super::report::{digest, Entry, Report};
use super::{write_file, Failure, FitKind, RunConfig, SimKind, EXIT_NUMERIC};
use crate::estimate::{
    fit_gain, fit_shift, fit_spectrum, fit_squeezing_pair, DataSeries, FitReport, GainModel, Model,
    QuadratureSeriesModel, SpectrumModel, DEFAULT_GAIN_REL_SIGMA, DEFAULT_VARIANCE_SIGMA_DB,
};
use crate::locksim::{instability_scan, simulate_alignment, simulate_cavity_lock, AlignmentConfig, SCAN_SEEDS};
use crate::photorefraction::{pm_efficiency, resonance_shift};
use crate::sensing::{calibrate_sig_depth, paired_run, MziConfig};
use crate::sqz_model::{asymptotic_squeezing_db, derive_cavity, CavityGeometry, Quadrature};
use crate::Error;

/// Points of the dense fitted-curve tables.
const CURVE_POINTS: usize = 201;

pub(super) struct Context {
    pub config: RunConfig,
    pub dir: PathBuf,
}

pub(super) enum Outcome {
    Failed(Failure),
    /// The report is still printed before exiting with the failure.
    Unconverged(Box<Report>, Failure),
}

impl From<Failure> for Outcome {
    fn from(f: Failure) -> Self {
        Self::Failed(f)
    }
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        Self::Failed(e.into())
    }
}

type CmdResult = Result<Report, Outcome>;

impl Context {
    fn digest(&self, args: &[&str], data: &[u8]) -> String {
        let cfg = self.config.to_json();
        let args = args.join(" ");
        digest(&[cfg.as_bytes(), args.as_bytes(), data])
    }

    fn write(&self, report: &mut Report, name: &str, contents: &str) -> Result<(), Failure> {
        write_file(&self.dir, name, contents)?;
        report.outputs.push(name.into());
        Ok(())
    }

    fn finish(&self, mut report: Report, stem: &str) -> CmdResult {
        let name = format!("{stem}_report.json");
        report.outputs.push(name.clone());
        write_file(&self.dir, &name, &report.to_json())?;
        Ok(report)
    }
}

fn n_eff_note(g: &CavityGeometry) -> String {
    format!(
        "n_eff = {} is assumed, not measured; FSR and photorefraction conversions scale with it",
        g.n_eff
    )
}

pub(super) fn budget(ctx: &Context, projection_alpha: Option<f64>) -> CmdResult {
    let cfg = &ctx.config;
    let alpha = projection_alpha.unwrap_or(cfg.projection_alpha);
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Failure::input(format!("projection alpha {alpha} must be a non-negative number")).into());
    }
    let mut r = Report::new("budget", ctx.digest(&["budget", &format!("{alpha}")], &[]));
    for e in cfg.detection.entries() {
        r.parameters.push(Entry::new(&e.name, e.eta, ""));
    }
    let detection = cfg.detection.total();
    let cavity = derive_cavity(&cfg.geometry)?;
    let overall = detection * cavity.escape_eta;
    let projected = derive_cavity(&CavityGeometry { alpha, ..cfg.geometry })?;
    let overall_p = detection * projected.escape_eta;
    let q = &mut r.quantities;
    q.push(Entry::new("detection_total", detection, ""));
    q.push(Entry::new("fsr", cavity.fsr, "Hz"));
    q.push(Entry::new("finesse", cavity.finesse, ""));
    q.push(Entry::new("fwhm", cavity.fwhm, "Hz"));
    q.push(Entry::new("escape_eta", cavity.escape_eta, ""));
    q.push(Entry::new("overall_eta", overall, ""));
    q.push(Entry::new(
        "asymptotic_squeezing",
        asymptotic_squeezing_db(overall)?,
        "dB",
    ));
    q.push(Entry::new("projection_alpha", alpha, "dB/m"));
    q.push(Entry::new("projection_escape_eta", projected.escape_eta, ""));
    q.push(Entry::new("projection_overall_eta", overall_p, ""));
    q.push(Entry::new(
        "projection_squeezing",
        asymptotic_squeezing_db(overall_p)?,
        "dB",
    ));
    r.notes.push(n_eff_note(&cfg.geometry));
    r.notes.push(format!(
        "geometry linewidth (FWHM {:.0} MHz) is an estimate from coating specifications; \
         fitted spectra give about 200 MHz, so fits keep the linewidth free",
        cavity.fwhm / 1e6
    ));
    r.notes
        .push("asymptotic squeezing is the zero-frequency limit at threshold without phase noise".into());
    ctx.finish(r, "budget")
}

fn lattice(lo: f64, hi: f64) -> Vec<f64> {
    (0..CURVE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect()
}

/// Value of a fitted or fixed parameter.
fn param(rep: &FitReport, name: &str) -> f64 {
    rep.value(name)
        .or_else(|| rep.fixed.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
        .unwrap_or(f64::NAN)
}

fn curve(model: &dyn Model, params: &[f64], xs: &[f64], header: &[&str]) -> Table {
    let mut t = Table::new(header);
    for &x in xs {
        let mut row = vec![x];
        row.extend((0..header.len() - 1).map(|s| model.predict(s, x, params)));
        t.rows.push(row);
    }
    t
}

fn min_rows(table: &Table, n: usize, kind: &str) -> Result<(), Failure> {
    if table.rows.len() < n {
        return Err(Failure::input(format!(
            "{kind} fit needs at least {n} rows, found {}",
            table.rows.len()
        )));
    }
    Ok(())
}

/// Two dB series sharing an abscissa column, with optional `sigma_db`.
fn variance_pair(table: &Table, x: &str) -> Result<(DataSeries, DataSeries, bool), Failure> {
    let xs = table.column(x).unwrap_or_default();
    let given = table.has("sigma_db");
    let sigma = table
        .column("sigma_db")
        .unwrap_or_else(|| vec![DEFAULT_VARIANCE_SIGMA_DB; xs.len()]);
    let sq = DataSeries::new(xs.clone(), table.column("sq_db").unwrap_or_default(), sigma.clone())?;
    let asq = DataSeries::new(xs, table.column("asq_db").unwrap_or_default(), sigma)?;
    Ok((sq, asq, given))
}

fn sigma_note(given: bool, what: &str, default: &str) -> String {
    if given {
        format!("{what} uncertainties taken from the data file")
    } else {
        format!("no {what} uncertainties in the data file; {default} assumed for every point")
    }
}

pub(super) fn fit(ctx: &Context, kind: FitKind, path: &Path) -> CmdResult {
    let bytes = std::fs::read(path).map_err(|e| super::io_failure(path, e))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|e| Failure::input(format!("{}: not UTF-8: {e}", path.display())))?;
    let cfg = &ctx.config;
    let command = format!("fit {}", kind.name());
    let mut r = Report::new(&command, ctx.digest(&["fit", kind.name()], &bytes));
    let stem = format!("fit_{}", kind.name());
    let curve_name = format!("{stem}_curve.csv");

    let rep = match kind {
        FitKind::Gain => {
            let t = parse_table(text, &["power_w", "gain_amp", "gain_deamp"], &["sigma"])?;
            min_rows(&t, 2, "gain")?;
            let p = t.column("power_w").unwrap_or_default();
            let rel = t
                .column("sigma")
                .unwrap_or_else(|| vec![DEFAULT_GAIN_REL_SIGMA; p.len()]);
            let series = |col: &str| -> Result<DataSeries, Failure> {
                let y = t.column(col).unwrap_or_default();
                let s = y.iter().zip(&rel).map(|(g, s)| g * s).collect();
                Ok(DataSeries::new(p.clone(), y, s)?)
            };
            let (amp, deamp) = (series("gain_amp")?, series("gain_deamp")?);
            let pm_cfg = cfg.phase_matching;
            let pm = cfg
                .fit
                .pm_temperature
                .map(|temp| move |power: f64| pm_efficiency(&pm_cfg, temp, power));
            let pm_ref = pm.as_ref().map(|f| f as &(dyn Fn(f64) -> f64 + Sync));
            let rep = fit_gain(&amp, &deamp, pm_ref)?;
            let model = GainModel { pm_correction: pm_ref };
            let max_p = p.iter().copied().fold(0.0, f64::max);
            let table = curve(
                &model,
                &[param(&rep, "p_threshold")],
                &lattice(0.0, max_p),
                &["power_w", "gain_amp", "gain_deamp"],
            );
            ctx.write(&mut r, &curve_name, &emit_table(&table))?;
            r.notes.push(if t.has("sigma") {
                "gain uncertainties taken from the sigma column, relative to each gain".into()
            } else {
                format!(
                    "no gain uncertainties in the data file; {} % of each gain assumed",
                    DEFAULT_GAIN_REL_SIGMA * 100.0
                )
            });
            rep
        }
        FitKind::Squeezing => {
            let t = parse_table(text, &["power_w", "sq_db", "asq_db"], &["sigma_db"])?;
            min_rows(&t, 2, "squeezing")?;
            let (sq, asq, given) = variance_pair(&t, "power_w")?;
            let f = &cfg.fit;
            let rep = fit_squeezing_pair(&sq, &asq, f.f_sideband, f.hwhm, f.fixed_phase_noise)?;
            let model = QuadratureSeriesModel {
                quads: vec![Quadrature::Squeezed, Quadrature::Antisqueezed],
                omega: f.f_sideband / f.hwhm,
            };
            let params = [
                param(&rep, "eta_total"),
                param(&rep, "p_threshold"),
                param(&rep, "phase_var"),
            ];
            let max_p = sq.x().iter().copied().fold(0.0, f64::max);
            let table = curve(&model, &params, &lattice(0.0, max_p), &["power_w", "sq_db", "asq_db"]);
            ctx.write(&mut r, &curve_name, &emit_table(&table))?;
            r.notes.push(sigma_note(
                given,
                "variance",
                &format!("{DEFAULT_VARIANCE_SIGMA_DB} dB"),
            ));
            r.notes.push(format!(
                "sideband {} Hz and linewidth {} Hz held fixed; the threshold is not shared with gain fits",
                f.f_sideband, f.hwhm
            ));
            rep
        }
        FitKind::Spectrum => {
            let t = parse_table(text, &["freq_hz", "sq_db", "asq_db"], &["sigma_db"])?;
            min_rows(&t, 3, "spectrum")?;
            let (sq, asq, given) = variance_pair(&t, "freq_hz")?;
            let f = &cfg.fit;
            let rep = fit_spectrum(&sq, &asq, f.p_over_pth, f.fixed_phase_noise)?;
            let model = SpectrumModel { x: f.p_over_pth.sqrt() };
            let params = [param(&rep, "eta_total"), param(&rep, "hwhm"), param(&rep, "phase_var")];
            let lo = sq.x().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sq.x().iter().copied().fold(0.0, f64::max);
            let table = curve(&model, &params, &lattice(lo, hi), &["freq_hz", "sq_db", "asq_db"]);
            ctx.write(&mut r, &curve_name, &emit_table(&table))?;
            r.notes.push(sigma_note(
                given,
                "variance",
                &format!("{DEFAULT_VARIANCE_SIGMA_DB} dB"),
            ));
            r.notes.push(format!("pump ratio P/P_th = {} held fixed", f.p_over_pth));
            rep
        }
        FitKind::Shift => {
            let t = parse_table(text, &["power_w", "shift_hz"], &["sigma_hz"])?;
            min_rows(&t, 2, "shift")?;
            let p = t.column("power_w").unwrap_or_default();
            let given = t.has("sigma_hz");
            let sigma = t.column("sigma_hz").unwrap_or_else(|| vec![1.0; p.len()]);
            let data = DataSeries::new(p.clone(), t.column("shift_hz").unwrap_or_default(), sigma)?;
            let mut rep = fit_shift(&data, cfg.geometry.n_eff)?;
            if !given {
                rescale_to_scatter(&mut rep);
            }
            let (slope, intercept) = (param(&rep, "slope"), param(&rep, "intercept"));
            let max_p = p.iter().copied().fold(0.0, f64::max);
            let mut table = Table::new(&["power_w", "shift_hz"]);
            table.rows = lattice(0.0, max_p)
                .into_iter()
                .map(|x| vec![x, slope * x + intercept])
                .collect();
            ctx.write(&mut r, &curve_name, &emit_table(&table))?;
            let at30 = slope * 0.030;
            r.quantities.push(Entry::with_error(
                "shift_at_30mW",
                at30,
                param_err(&rep, "slope") * 0.030,
                "Hz",
            ));
            let model_shift = resonance_shift(&cfg.photorefraction, &cfg.geometry, 0.030);
            r.quantities
                .push(Entry::new("configured_shift_at_30mW", model_shift, "Hz"));
            r.notes.push(format!("fitted shift at 30 mW is a {}", direction(at30)));
            r.notes.push(n_eff_note(&cfg.geometry));
            rep
        }
    };
    r.add_fit(&rep, &UNITS);
    if !rep.converged {
        let last: Vec<String> = rep
            .names
            .iter()
            .zip(&rep.values)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        let failure = Failure {
            code: EXIT_NUMERIC,
            message: format!(
                "fit did not converge after {} iterations; last iterate {}",
                rep.n_iter,
                last.join(", ")
            ),
        };
        let report = ctx.finish(r, &stem)?;
        return Err(Outcome::Unconverged(Box::new(report), failure));
    }
    ctx.finish(r, &stem)
}

const UNITS: [(&str, &str); 6] = [
    ("p_threshold", "W"),
    ("hwhm", "Hz"),
    ("fwhm", "Hz"),
    ("phase_noise", "rad"),
    ("phase_var", "rad^2"),
    ("slope", "Hz/W"),
];

fn param_err(rep: &FitReport, name: &str) -> f64 {
    rep.error(name).unwrap_or(f64::NAN)
}

fn direction(shift_hz: f64) -> &'static str {
    if shift_hz > 0.0 {
        "blueshift"
    } else if shift_hz < 0.0 {
        "redshift"
    } else {
        "null shift"
    }
}

/// Replaces unit-weight errors by errors from the residual scatter, or by
/// NaN when no degrees of freedom remain.
fn rescale_to_scatter(rep: &mut FitReport) {
    let factor = if rep.dof > 0 {
        (rep.chi2 / rep.dof as f64).sqrt()
    } else {
        f64::NAN
    };
    for s in rep.stderr.iter_mut() {
        *s *= factor;
    }
    for row in rep.covariance.iter_mut() {
        for c in row.iter_mut() {
            *c *= factor * factor;
        }
    }
    for d in rep.derived.iter_mut() {
        d.stderr *= factor;
    }
    rep.notes.retain(|n| !n.contains("sigmas taken as absolute"));
    rep.notes.push(if rep.dof > 0 {
        "no shift uncertainties in the data file; errors estimated from the residual scatter".into()
    } else {
        "no shift uncertainties and no spare points; parameter errors are undefined".into()
    });
}

pub(super) fn simulate(ctx: &Context, kind: SimKind) -> CmdResult {
    let cfg = &ctx.config;
    let stem = format!("simulate_{}", kind.name());
    let mut r = Report::new(
        &format!("simulate {}", kind.name()),
        ctx.digest(&["simulate", kind.name()], &[]),
    );
    match kind {
        SimKind::Lock => {
            let cavity = derive_cavity(&cfg.geometry)?;
            let trace = simulate_cavity_lock(&cavity, &cfg.lock, &cfg.drift, cfg.lock_power)?;
            ctx.write(&mut r, "lock_trace.csv", &emit_trace(&trace))?;
            let rms = trace.rms_detuning();
            let q = &mut r.quantities;
            q.push(Entry::new("pump_power", cfg.lock_power, "W"));
            q.push(Entry::new("hwhm", cavity.hwhm, "Hz"));
            q.push(Entry::new("lock_fraction", trace.lock_fraction(), ""));
            q.push(Entry::new("rms_detuning", rms, "Hz"));
            q.push(Entry::new("rms_detuning_over_hwhm", rms / cavity.hwhm, ""));
            r.notes.push(format!(
                "seed {}; lock counted within {} hwhm held for {} s",
                cfg.lock.seed, cfg.lock.lock_threshold, cfg.lock.lock_hold
            ));
        }
        SimKind::Align => {
            let on = simulate_alignment(&cfg.alignment)?;
            let off = simulate_alignment(&AlignmentConfig {
                optimizer: false,
                ..cfg.alignment
            })?;
            ctx.write(&mut r, "align_trace.csv", &emit_trace(&on))?;
            ctx.write(&mut r, "align_control_trace.csv", &emit_trace(&off))?;
            let peak = cfg.alignment.surface.eta_max;
            let q = &mut r.quantities;
            q.push(Entry::new("peak_coupling", peak, ""));
            q.push(Entry::new("mean_coupling", on.mean_coupling(), ""));
            q.push(Entry::new("mean_coupling_over_peak", on.mean_coupling() / peak, ""));
            q.push(Entry::new("final_coupling", on.final_coupling(), ""));
            q.push(Entry::new("control_mean_coupling", off.mean_coupling(), ""));
            q.push(Entry::new("control_final_coupling", off.final_coupling(), ""));
            r.notes
                .push("the control run repeats the same drift and noise with the optimizer off".into());
        }
        SimKind::Instability => {
            let cavity = derive_cavity(&cfg.geometry)?;
            let scan = instability_scan(&cavity, &cfg.lock, &cfg.drift, &cfg.scan_powers)?;
            let mut table = Table::new(&["power_w", "lock_fraction"]);
            table.rows = scan.iter().map(|&(p, f)| vec![p, f]).collect();
            ctx.write(&mut r, "instability_scan.csv", &emit_table(&table))?;
            let crossing = half_crossing(&scan);
            r.quantities
                .push(Entry::new("half_lock_power", crossing.unwrap_or(f64::NAN), "W"));
            r.notes.push(format!(
                "each point averages {SCAN_SEEDS} seeds starting at {}",
                cfg.lock.seed
            ));
            if crossing.is_none() {
                r.notes
                    .push("lock fraction never falls through 0.5 in the scanned range".into());
            }
        }
        SimKind::Mzi => {
            let mut mzi: MziConfig = cfg.mzi;
            if let Some(target) = cfg.mzi_calibrate_snr_db {
                mzi.sig_depth = calibrate_sig_depth(&mzi, target)?;
                r.notes.push(format!(
                    "sig_depth recalibrated to {} rad for {target} dB vacuum SNR",
                    mzi.sig_depth
                ));
            }
            let run = paired_run(&mzi)?;
            let mut table = Table::new(&["freq_hz", "vacuum_db", "squeezed_db"]);
            table.rows = run
                .vacuum
                .points()
                .zip(run.squeezed.y())
                .map(|((f, v, _), s)| vec![f, v, *s])
                .collect();
            ctx.write(&mut r, "mzi_spectrum.csv", &emit_table(&table))?;
            let res = &run.result;
            let (lower, upper) = sideband_peaks(&run.vacuum, &mzi);
            let q = &mut r.quantities;
            q.push(Entry::new("v_injected", res.v_injected, ""));
            q.push(Entry::new("snr_vacuum", res.snr_vacuum_db, "dB"));
            q.push(Entry::new("snr_squeezed", res.snr_squeezed_db, "dB"));
            q.push(Entry::new("delta_snr", res.snr_squeezed_db - res.snr_vacuum_db, "dB"));
            q.push(Entry::new("delta_snr_model", res.delta_snr_model_db, "dB"));
            q.push(Entry::new("noise_floor_rel", res.noise_floor_rel_db, "dB"));
            q.push(Entry::new("floor_bin_std", res.floor_bin_std_db, "dB"));
            q.push(Entry::new("lower_sideband", lower, "Hz"));
            q.push(Entry::new("upper_sideband", upper, "Hz"));
            q.push(Entry::new("rbw", res.rbw, "Hz"));
            r.notes.push(format!(
                "signal bins {} between the paired runs",
                if res.signal_bins_identical {
                    "identical"
                } else {
                    "differ"
                }
            ));
            if res.capped {
                r.notes
                    .push("an SNR hit the 200 dB cap: the noise estimate is at round-off".into());
            }
        }
    }
    ctx.finish(r, &stem)
}

/// Linearly interpolated power where the lock fraction first falls from
/// at least 0.5 to below it.
pub fn half_crossing(scan: &[(f64, f64)]) -> Option<f64> {
    scan.windows(2).find(|w| w[0].1 >= 0.5 && w[1].1 < 0.5).map(|w| {
        let ((p0, f0), (p1, f1)) = (w[0], w[1]);
        p0 + (f0 - 0.5) / (f0 - f1) * (p1 - p0)
    })
}

/// Frequencies of the largest bins within half a signal frequency of each
/// expected sideband.
pub fn sideband_peaks(spectrum: &DataSeries, mzi: &MziConfig) -> (f64, f64) {
    let peak = |center: f64| {
        spectrum
            .points()
            .filter(|&(f, _, _)| (f - center).abs() <= 0.5 * mzi.sig_freq)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(f64::NAN, |(f, _, _)| f)
    };
    (peak(mzi.am_freq - mzi.sig_freq), peak(mzi.am_freq + mzi.sig_freq))
}
