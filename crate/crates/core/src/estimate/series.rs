use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A measured curve: abscissae, ordinates and 1σ errors.
///
/// Points are kept sorted by `x`; duplicate abscissae are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Vec<f64>,
}

impl DataSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return Err(Error::InvalidData(format!(
                "length mismatch: x {}, y {}, sigma {}",
                x.len(),
                y.len(),
                sigma.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidData("a series needs at least 2 points".into()));
        }
        for i in 0..x.len() {
            if !x[i].is_finite() || !y[i].is_finite() {
                return Err(Error::InvalidData(format!("non-finite value at point {i}")));
            }
            if !(sigma[i] > 0.0) || !sigma[i].is_finite() {
                return Err(Error::InvalidData(format!("sigma at point {i} must be positive")));
            }
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (x, y, sigma) = (pick(&x), pick(&y), pick(&sigma));
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData("duplicate abscissae".into()));
        }
        Ok(Self { x, y, sigma })
    }

    /// Series with a common uncertainty.
    pub fn with_uniform_sigma(x: Vec<f64>, y: Vec<f64>, sigma: f64) -> Result<Self> {
        let s = vec![sigma; x.len()];
        Self::new(x, y, s)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(|i| (self.x[i], self.y[i], self.sigma[i]))
    }

    /// Same points with every sigma multiplied by `factor`.
    pub fn scale_sigma(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.x.clone(),
            self.y.clone(),
            self.sigma.iter().map(|s| s * factor).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_points() {
        let s = DataSeries::new(vec![3.0, 1.0, 2.0], vec![30.0, 10.0, 20.0], vec![0.3, 0.1, 0.2]).unwrap();
        assert_eq!(s.x(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.y(), &[10.0, 20.0, 30.0]);
        assert_eq!(s.sigma(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DataSeries::new(vec![1.0], vec![1.0], vec![1.0]).is_err());
        assert!(DataSeries::new(vec![1.0, 2.0], vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(DataSeries::new(vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(DataSeries::new(vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(DataSeries::new(vec![1.0, f64::NAN], vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
    }
}
