use super::{DataSeries, FitReport};
use crate::{Error, Result};

/// Weighted straight-line fit `y = slope x + intercept`.
///
/// Closed form; the covariance takes the sigmas as absolute errors.
pub fn linfit(data: &DataSeries) -> Result<FitReport> {
    linfit_raw(data.x(), data.y(), data.sigma())
}

pub fn linfit_raw(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitReport> {
    if x.len() < 2 || x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::InvalidData("linfit needs at least 2 matched points".into()));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    // centred form for the determinant avoids cancellation
    let xm = sx / s;
    let sxx_c: f64 = x
        .iter()
        .zip(sigma)
        .map(|(xi, si)| (xi - xm) * (xi - xm) / (si * si))
        .sum();
    let delta = s * sxx_c;
    if !(sxx_c > 1e-14 * sxx.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateAbscissae);
    }
    let slope = (s * sxy - sx * sy) / delta;
    let intercept = (sy - slope * sx) / s;
    let var_slope = s / delta;
    let var_intercept = sxx / delta;
    let cov = -sx / delta;
    let chi2: f64 = (0..x.len())
        .map(|i| ((y[i] - slope * x[i] - intercept) / sigma[i]).powi(2))
        .sum();
    let covariance = vec![vec![var_slope, cov], vec![cov, var_intercept]];
    Ok(FitReport {
        names: vec!["slope".into(), "intercept".into()],
        values: vec![slope, intercept],
        stderr: vec![var_slope.sqrt(), var_intercept.sqrt()],
        covariance: covariance.clone(),
        covariance_unscaled: covariance,
        chi2,
        dof: x.len() - 2,
        converged: true,
        n_iter: 0,
        fixed: Vec::new(),
        derived: Vec::new(),
        notes: vec!["closed-form weighted regression, sigmas taken as absolute".into()],
        chi2_history: vec![chi2],
    })
}
