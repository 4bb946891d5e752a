use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::DataSeries;
use crate::{Error, Result};

/// Model predictions for one point of one series.
///
/// `params` holds physical (untransformed) values, fixed parameters
/// included, in the order of the [`ParamSpec`] list. Implementations must be
/// pure; returning a non-finite value marks the parameter point as invalid.
pub trait Model: Sync {
    fn predict(&self, series: usize, x: f64, params: &[f64]) -> f64;
}

impl<F> Model for F
where
    F: Fn(usize, f64, &[f64]) -> f64 + Sync,
{
    fn predict(&self, series: usize, x: f64, params: &[f64]) -> f64 {
        self(series, x, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Free,
    /// `p > 0`, fitted as `ln p`.
    Positive,
    /// `0 < p < 1`, fitted through the logit.
    Unit,
    /// `lo < p < hi`, fitted through a scaled logit.
    Interval(f64, f64),
}

impl Bound {
    fn to_internal(self, p: f64) -> Option<f64> {
        let logit = |t: f64| (t / (1.0 - t)).ln();
        let u = match self {
            Bound::Free => p,
            Bound::Positive if p > 0.0 => p.ln(),
            Bound::Unit if p > 0.0 && p < 1.0 => logit(p),
            Bound::Interval(lo, hi) if lo < hi && p > lo && p < hi => logit((p - lo) / (hi - lo)),
            _ => return None,
        };
        u.is_finite().then_some(u)
    }

    fn to_external(self, u: f64) -> f64 {
        let logistic = |u: f64| 1.0 / (1.0 + (-u).exp());
        match self {
            Bound::Free => u,
            Bound::Positive => u.exp(),
            Bound::Unit => logistic(u),
            Bound::Interval(lo, hi) => lo + (hi - lo) * logistic(u),
        }
    }

    /// `dp / du` at internal coordinate `u`.
    fn derivative(self, u: f64) -> f64 {
        let dlogistic = |u: f64| {
            let l = 1.0 / (1.0 + (-u).exp());
            l * (1.0 - l)
        };
        match self {
            Bound::Free => 1.0,
            Bound::Positive => u.exp(),
            Bound::Unit => dlogistic(u),
            Bound::Interval(lo, hi) => (hi - lo) * dlogistic(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: &str, value: f64, bound: Bound) -> Self {
        Self {
            name: name.to_string(),
            value,
            bound,
            fixed: false,
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            bound: Bound::Free,
            fixed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative step below which the fit is converged.
    pub xtol: f64,
    /// Gradient infinity-norm below which the fit is converged.
    pub gtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-10,
            gtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValue {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

/// Fitted parameters with 1σ errors.
///
/// `covariance` is the inverse normal matrix scaled by `chi2 / dof`; with no
/// degrees of freedom left the unscaled matrix is reported and a note is
/// added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_unscaled: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub n_iter: usize,
    pub fixed: Vec<(String, f64)>,
    pub derived: Vec<DerivedValue>,
    pub notes: Vec<String>,
    /// Objective after every accepted step, starting with the initial value.
    #[serde(skip)]
    pub chi2_history: Vec<f64>,
}

impl FitReport {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.stderr[i])
    }

    pub fn derived(&self, name: &str) -> Option<&DerivedValue> {
        self.derived.iter().find(|d| d.name == name)
    }

    /// Fitted, fixed and derived values merged, in that order.
    pub fn all_values(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.names.iter().cloned().zip(self.values.iter().copied()).collect();
        out.extend(self.fixed.iter().cloned());
        out.extend(self.derived.iter().map(|d| (d.name.clone(), d.value)));
        out
    }
}

/// `Σ ((y - model) / σ)²` at physical parameters `params`.
pub fn objective(model: &dyn Model, data: &[DataSeries], params: &[f64]) -> f64 {
    let mut chi2 = 0.0;
    for (s, series) in data.iter().enumerate() {
        for (x, y, sigma) in series.points() {
            let r = (y - model.predict(s, x, params)) / sigma;
            chi2 += r * r;
        }
    }
    if chi2.is_finite() {
        chi2
    } else {
        f64::INFINITY
    }
}

struct Problem<'a> {
    model: &'a dyn Model,
    data: &'a [DataSeries],
    specs: &'a [ParamSpec],
    free: Vec<usize>,
    n_points: usize,
}

impl Problem<'_> {
    fn external(&self, u: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.specs.iter().map(|s| s.value).collect();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = self.specs[i].bound.to_external(u[k]);
        }
        p
    }

    /// Weighted residuals; `Err((series, index, x))` for the first
    /// non-finite one.
    fn residuals(&self, u: &[f64]) -> std::result::Result<DVector<f64>, (usize, usize, f64)> {
        let p = self.external(u);
        let mut r = DVector::zeros(self.n_points);
        let mut k = 0;
        for (s, series) in self.data.iter().enumerate() {
            for (i, (x, y, sigma)) in series.points().enumerate() {
                let v = (y - self.model.predict(s, x, &p)) / sigma;
                if !v.is_finite() {
                    return Err((s, i, x));
                }
                r[k] = v;
                k += 1;
            }
        }
        Ok(r)
    }

    fn jacobian(&self, u: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let f = |u: &[f64]| self.residuals(u).ok();
        numerical_jacobian_with(&f, u, r0)
    }
}

fn numerical_jacobian_with(f: &dyn Fn(&[f64]) -> Option<DVector<f64>>, u: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
    let n = r0.len();
    let mut jac = DMatrix::zeros(n, u.len());
    let mut probe = u.to_vec();
    for j in 0..u.len() {
        let h = 6e-6 * u[j].abs().max(1.0);
        probe[j] = u[j] + h;
        let plus = f(&probe);
        probe[j] = u[j] - h;
        let minus = f(&probe);
        probe[j] = u[j];
        let col = match (plus, minus) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - r0) / h,
            (None, Some(b)) => (r0 - b) / h,
            (None, None) => DVector::zeros(n),
        };
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference Jacobian of `f` at `u`.
pub fn numerical_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, u: &[f64]) -> Vec<Vec<f64>> {
    let g = |v: &[f64]| Some(DVector::from_vec(f(v)));
    let r0 = DVector::from_vec(f(u));
    let j = numerical_jacobian_with(&g, u, &r0);
    (0..j.nrows()).map(|i| j.row(i).iter().copied().collect()).collect()
}

fn describe_combination(names: &[&str], v: &DVector<f64>) -> String {
    let mut parts = Vec::new();
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    for (name, c) in names.iter().zip(v.iter()) {
        let c = c * sign;
        if c.abs() >= 0.1 {
            parts.push(format!("{c:+.3}*{name}"));
        }
    }
    parts.join(" ")
}

/// Rejects normal matrices with a (numerically) null direction and names it.
///
/// Columns are first scaled by `max(|u|, 1)`; a direction is null when its
/// eigenvalue is below `1e-12` absolutely (a unit change of the scaled
/// parameter moves χ² by less than 1e-12) or below `1e-10` of the largest
/// eigenvalue after normalizing to unit diagonal.
fn check_rank(a: &DMatrix<f64>, u: &[f64], names: &[&str]) -> Result<()> {
    let n = a.nrows();
    let scale = DVector::from_iterator(n, u.iter().map(|v| v.abs().max(1.0)));
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);

    let dead: Vec<usize> = (0..n).filter(|&i| scaled[(i, i)] < 1e-12).collect();
    if !dead.is_empty() {
        let combination = dead.iter().map(|&i| names[i]).collect::<Vec<_>>().join(", ");
        return Err(Error::RankDeficient { combination });
    }

    let eig = SymmetricEigen::new(scaled.clone());
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if lmin < 1e-12 {
        return Err(Error::RankDeficient {
            combination: describe_combination(names, &eig.eigenvectors.column(imin).into_owned()),
        });
    }

    let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 / scaled[(i, i)].sqrt()));
    let corr = DMatrix::from_fn(n, n, |i, j| scaled[(i, j)] * d[i] * d[j]);
    let eig = SymmetricEigen::new(corr);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if lmin < 1e-10 * lmax {
        return Err(Error::RankDeficient {
            combination: describe_combination(names, &eig.eigenvectors.column(imin).into_owned()),
        });
    }
    Ok(())
}

/// Damped least-squares fit of `model` to `data`.
///
/// Returns a report even when the iteration cap is hit (`converged` is
/// false). Errors are reserved for invalid setups, a non-finite residual at
/// the initial point and rank-deficient normal matrices.
pub fn fit_least_squares(
    model: &dyn Model,
    params: &[ParamSpec],
    data: &[DataSeries],
    options: &FitOptions,
) -> Result<FitReport> {
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    if free.is_empty() {
        return Err(Error::InvalidParameters("no free parameters".into()));
    }
    let n_points: usize = data.iter().map(|s| s.len()).sum();
    if n_points < free.len() {
        return Err(Error::InvalidParameters(format!(
            "{} points cannot determine {} parameters",
            n_points,
            free.len()
        )));
    }
    let mut u: Vec<f64> = Vec::with_capacity(free.len());
    for &i in &free {
        let s = &params[i];
        u.push(s.bound.to_internal(s.value).ok_or_else(|| {
            Error::InvalidParameters(format!(
                "initial value {} of '{}' is outside its bounds {:?}",
                s.value, s.name, s.bound
            ))
        })?);
    }
    let problem = Problem {
        model,
        data,
        specs: params,
        free: free.clone(),
        n_points,
    };

    let mut r = problem
        .residuals(&u)
        .map_err(|(series, index, x)| Error::Evaluation { series, index, x })?;
    let mut chi2 = r.norm_squared();
    let mut history = vec![chi2];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iter = 0;

    'outer: while n_iter < options.max_iter {
        n_iter += 1;
        let jac = problem.jacobian(&u, &r);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() < options.gtol {
            converged = true;
            break;
        }
        let max_diag = a.diagonal().amax();
        loop {
            let mut damped = a.clone();
            for i in 0..u.len() {
                let d = a[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
                damped[(i, i)] += lambda * d;
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step.norm() <= options.xtol * (unorm + options.xtol) {
                converged = true;
                break 'outer;
            }
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match problem.residuals(&trial) {
                Ok(r_new) if r_new.norm_squared() <= chi2 => {
                    u = trial;
                    r = r_new;
                    chi2 = r.norm_squared();
                    history.push(chi2);
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        // no descent direction left at working precision
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    let jac = problem.jacobian(&u, &r);
    let a = jac.transpose() * &jac;
    let names: Vec<&str> = free.iter().map(|&i| params[i].name.as_str()).collect();
    check_rank(&a, &u, &names)?;
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| a.clone().try_inverse())
        .ok_or_else(|| Error::RankDeficient {
            combination: names.join(", "),
        })?;

    let jt: Vec<f64> = free
        .iter()
        .zip(u.iter())
        .map(|(&i, &ui)| params[i].bound.derivative(ui))
        .collect();
    let k = free.len();
    let unscaled: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| inv[(i, j)] * jt[i] * jt[j]).collect())
        .collect();
    let dof = n_points - k;
    let mut notes = Vec::new();
    let factor = if dof > 0 {
        chi2 / dof as f64
    } else {
        notes.push("no degrees of freedom: covariance uses the sigmas as absolute".to_string());
        1.0
    };
    let covariance: Vec<Vec<f64>> = unscaled
        .iter()
        .map(|row| row.iter().map(|c| c * factor).collect())
        .collect();
    let stderr = (0..k).map(|i| covariance[i][i].max(0.0).sqrt()).collect();

    let external = problem.external(&u);
    Ok(FitReport {
        names: names.iter().map(|s| s.to_string()).collect(),
        values: free.iter().map(|&i| external[i]).collect(),
        stderr,
        covariance,
        covariance_unscaled: unscaled,
        chi2,
        dof,
        converged,
        n_iter,
        fixed: params
            .iter()
            .filter(|s| s.fixed)
            .map(|s| (s.name.clone(), s.value))
            .collect(),
        derived: Vec::new(),
        notes,
        chi2_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line(_: usize, x: f64, p: &[f64]) -> f64 {
        p[0] * x + p[1]
    }

    fn exp_decay(_: usize, x: f64, p: &[f64]) -> f64 {
        p[0] * (-x / p[1]).exp() + p[2]
    }

    fn decay_data(seed: u64, noise: f64) -> DataSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise).unwrap();
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y = x
            .iter()
            .map(|&t| 3.0 * (-t / 2.0).exp() + 0.5 + n.sample(&mut rng))
            .collect();
        DataSeries::new(x, y, vec![noise; 40]).unwrap()
    }

    fn decay_specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("amp", 1.0, Bound::Free),
            ParamSpec::new("tau", 1.0, Bound::Positive),
            ParamSpec::new("offset", 0.0, Bound::Free),
        ]
    }

    #[test]
    fn exact_line() {
        let d = DataSeries::with_uniform_sigma(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 5.0, 7.0], 0.1).unwrap();
        let specs = [
            ParamSpec::new("m", 0.0, Bound::Free),
            ParamSpec::new("b", 0.0, Bound::Free),
        ];
        let rep = fit_least_squares(&line, &specs, &[d], &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.values[0] - 2.0).abs() < 1e-9);
        assert!((rep.values[1] - 1.0).abs() < 1e-9);
        assert!(rep.chi2 < 1e-12, "chi2 {} iters {}", rep.chi2, rep.n_iter);
        assert_eq!(rep.dof, 2);
    }

    #[test]
    fn covariance_properties() {
        let d = decay_data(1, 0.05);
        let rep = fit_least_squares(&exp_decay, &decay_specs(), &[d], &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.value("tau").unwrap() - 2.0).abs() < 3.0 * rep.error("tau").unwrap());
        let k = rep.names.len();
        for i in 0..k {
            assert!((rep.stderr[i] - rep.covariance[i][i].sqrt()).abs() < 1e-15);
            for j in 0..k {
                assert!(
                    (rep.covariance[i][j] - rep.covariance[j][i]).abs()
                        <= 1e-12 * rep.covariance[i][i].abs().max(1e-30)
                );
            }
        }
        let m = DMatrix::from_fn(k, k, |i, j| rep.covariance[i][j]);
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-15));
    }

    #[test]
    fn objective_never_increases() {
        let d = decay_data(2, 0.05);
        let rep = fit_least_squares(&exp_decay, &decay_specs(), &[d], &FitOptions::default()).unwrap();
        assert!(rep.chi2_history.len() > 2);
        assert!(rep.chi2_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invariant_under_reordering_and_sigma_scaling() {
        let d = decay_data(3, 0.05);
        let base = fit_least_squares(
            &exp_decay,
            &decay_specs(),
            std::slice::from_ref(&d),
            &FitOptions::default(),
        )
        .unwrap();

        let mut idx: Vec<usize> = (0..d.len()).collect();
        idx.reverse();
        let shuffled = DataSeries::new(
            idx.iter().map(|&i| d.x()[i]).collect(),
            idx.iter().map(|&i| d.y()[i]).collect(),
            idx.iter().map(|&i| d.sigma()[i]).collect(),
        )
        .unwrap();
        let re = fit_least_squares(&exp_decay, &decay_specs(), &[shuffled], &FitOptions::default()).unwrap();
        for (a, b) in base.values.iter().zip(&re.values) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }

        let scaled = fit_least_squares(
            &exp_decay,
            &decay_specs(),
            &[d.scale_sigma(3.0).unwrap()],
            &FitOptions::default(),
        )
        .unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        for i in 0..3 {
            // the chi2/dof scaling cancels a uniform sigma factor; the raw
            // inverse normal matrix scales with its square
            let c0 = base.covariance[i][i];
            assert!((scaled.covariance[i][i] - c0).abs() < 1e-6 * c0);
            let u0 = base.covariance_unscaled[i][i];
            assert!((scaled.covariance_unscaled[i][i] - 9.0 * u0).abs() < 1e-6 * 9.0 * u0);
        }
    }

    #[test]
    fn jacobian_matches_analytic() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let f = |p: &[f64]| xs.iter().map(|&x| p[0] * (-x / p[1]).exp() + p[2]).collect::<Vec<_>>();
        let p = [2.0, 1.5, 0.3];
        let jac = numerical_jacobian(&f, &p);
        for (i, &x) in xs.iter().enumerate() {
            let e = (-x / p[1]).exp();
            let analytic = [e, p[0] * e * x / (p[1] * p[1]), 1.0];
            for j in 0..3 {
                let tol = 1e-6 * analytic[j].abs().max(1e-3);
                assert!((jac[i][j] - analytic[j]).abs() < tol, "{i} {j}");
            }
        }
    }

    #[test]
    fn collinear_parameters_are_named() {
        let model = |_: usize, x: f64, p: &[f64]| (p[0] + p[1]) * x;
        let d = DataSeries::with_uniform_sigma(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], 0.1).unwrap();
        let specs = [
            ParamSpec::new("a", 0.5, Bound::Free),
            ParamSpec::new("b", 0.5, Bound::Free),
        ];
        match fit_least_squares(&model, &specs, &[d], &FitOptions::default()) {
            Err(Error::RankDeficient { combination }) => {
                assert!(combination.contains("a") && combination.contains("b"), "{combination}");
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_start_is_reported() {
        let model = |_: usize, x: f64, p: &[f64]| (x - p[0]).ln();
        let d = DataSeries::with_uniform_sigma(vec![1.0, 2.0, 3.0], vec![0.0, 0.7, 1.1], 0.1).unwrap();
        let specs = [ParamSpec::new("c", 1.5, Bound::Free)];
        assert_eq!(
            fit_least_squares(&model, &specs, &[d], &FitOptions::default()).unwrap_err(),
            Error::Evaluation {
                series: 0,
                index: 0,
                x: 1.0
            }
        );
    }

    #[test]
    fn bounds_are_respected() {
        let model = |_: usize, x: f64, p: &[f64]| p[0] * x;
        // data prefer a slope of 2, the bound caps it below 1
        let d = DataSeries::with_uniform_sigma(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], 0.1).unwrap();
        let specs = [ParamSpec::new("s", 0.5, Bound::Unit)];
        let rep = fit_least_squares(
            &model,
            &specs,
            &[d],
            &FitOptions {
                max_iter: 50,
                ..Default::default()
            },
        );
        if let Ok(rep) = rep {
            assert!(rep.values[0] < 1.0);
        }
        let bad = [ParamSpec::new("s", 1.5, Bound::Unit)];
        let d = DataSeries::with_uniform_sigma(vec![1.0, 2.0], vec![2.0, 4.0], 0.1).unwrap();
        assert!(matches!(
            fit_least_squares(&model, &bad, &[d], &FitOptions::default()),
            Err(Error::InvalidParameters(_))
        ));
    }
}
