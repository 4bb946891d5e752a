use super::{objective, DataSeries, Model};
use crate::{Error, Result};

/// Candidate values for one model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl GridAxis {
    pub fn new(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            values,
        }
    }

    /// Single-value axis for a parameter held fixed.
    pub fn fixed(name: &str, value: f64) -> Self {
        Self::new(name, vec![value])
    }

    /// Spacing of a uniform lattice, 0 for single points.
    pub fn step(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            (self.values[self.values.len() - 1] - self.values[0]) / (self.values.len() - 1) as f64
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Exhaustive minimizer of the weighted objective over the lattice spanned
/// by `grid` (one axis per model parameter, in model order).
pub fn grid_oracle(model: &dyn Model, grid: &[GridAxis], data: &[DataSeries]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("no axes".into()));
    }
    if let Some(axis) = grid.iter().find(|a| a.values.is_empty()) {
        return Err(Error::EmptyGrid(format!("axis '{}' has no values", axis.name)));
    }
    let mut index = vec![0usize; grid.len()];
    let mut point: Vec<f64> = grid.iter().map(|a| a.values[0]).collect();
    let mut best = (f64::INFINITY, point.clone());
    loop {
        let value = objective(model, data, &point);
        if value < best.0 {
            best = (value, point.clone());
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == grid.len() {
                return if best.0.is_finite() {
                    Ok(best.1)
                } else {
                    Err(Error::EmptyGrid("objective is not finite anywhere on the grid".into()))
                };
            }
            index[k] += 1;
            if index[k] < grid[k].values.len() {
                point[k] = grid[k].values[index[k]];
                break;
            }
            index[k] = 0;
            point[k] = grid[k].values[0];
            k += 1;
        }
    }
}
