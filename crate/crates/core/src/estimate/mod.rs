//! Weighted nonlinear least squares and the model-specific fits.
//!
//! The engine ([`fit_least_squares`]) is a damped Gauss-Newton
//! (Levenberg-Marquardt) minimizer of `Σ ((y - model) / σ)²` over one or more
//! [`DataSeries`]. Bounded parameters are handled by reparameterization and
//! the reported covariance is mapped back to the physical parameters.
//! [`grid_oracle`] minimizes the same objective by exhaustive search and is
//! used to cross-check every fit.

mod adapters;
mod engine;
mod grid;
mod linfit;
mod series;

pub use adapters::{
    fit_gain, fit_quadrature_series, fit_shift, fit_spectrum, fit_squeezing_pair, GainModel, QuadratureSeriesModel,
    SpectrumModel, DEFAULT_GAIN_REL_SIGMA, DEFAULT_VARIANCE_SIGMA_DB,
};
pub use engine::{
    fit_least_squares, numerical_jacobian, objective, Bound, DerivedValue, FitOptions, FitReport, Model, ParamSpec,
};
pub use grid::{grid_oracle, lattice, GridAxis};
pub use linfit::{linfit, linfit_raw};
pub use series::DataSeries;

/// Maps a `phase_var` estimate and its 1σ error onto the phase-noise standard
/// deviation, using half the width of the mapped ±1σ interval as the error.
pub(crate) fn phase_noise_from_variance(q: f64, q_err: f64) -> DerivedValue {
    let root = |v: f64| v.max(0.0).sqrt();
    DerivedValue {
        name: "phase_noise".into(),
        value: root(q),
        stderr: 0.5 * (root(q + q_err) - root(q - q_err)),
    }
}
