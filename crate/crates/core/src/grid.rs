//! Brute-force normalization of a log density on a one- or two-dimensional
//! grid, and total-variation distance between samples and that grid law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::log_sum_exp;

/// A normalized law on the cells of a rectangular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOracle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    probabilities: Vec<f64>,
}

impl GridOracle {
    /// Integrates `exp(log_density)` over each cell with a `sub × sub`
    /// midpoint rule and normalizes. Points where the density is `-inf`
    /// (outside the support) contribute nothing.
    pub fn new<F>(lower: &[f64], upper: &[f64], resolution: &[usize], sub: usize, mut log_density: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let dim = lower.len();
        if !(dim == 1 || dim == 2) || upper.len() != dim || resolution.len() != dim {
            return Err(Error::Domain("grid oracles are one- or two-dimensional".into()));
        }
        if resolution.iter().any(|&r| r == 0) || sub == 0 {
            return Err(Error::Domain("grid resolution must be positive".into()));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
            return Err(Error::Domain("grid bounds must be increasing".into()));
        }
        let width: Vec<f64> = (0..dim).map(|k| (upper[k] - lower[k]) / resolution[k] as f64).collect();
        let cells: usize = resolution.iter().product();
        let mut logs = Vec::with_capacity(cells);
        let mut point = vec![0.0; dim];
        let mut sub_logs = Vec::with_capacity(sub.pow(dim as u32));
        for cell in 0..cells {
            let idx = unflatten(cell, resolution);
            sub_logs.clear();
            let subs = sub.pow(dim as u32);
            for s in 0..subs {
                let mut rem = s;
                for k in 0..dim {
                    let j = rem % sub;
                    rem /= sub;
                    point[k] = lower[k] + width[k] * (idx[k] as f64 + (j as f64 + 0.5) / sub as f64);
                }
                let v = log_density(&point)?;
                if v.is_nan() || v == f64::INFINITY {
                    return Err(Error::Numerical(format!("grid log density is {v} at {point:?}")));
                }
                sub_logs.push(v);
            }
            logs.push(log_sum_exp(&sub_logs));
        }
        let total = log_sum_exp(&logs);
        if !total.is_finite() {
            return Err(Error::Numerical("grid log density has no mass".into()));
        }
        let probabilities = logs.iter().map(|l| (l - total).exp()).collect();
        Ok(GridOracle {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            resolution: resolution.to_vec(),
            probabilities,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Index of the cell containing `x`, or `None` outside the bounds.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        let mut stride = 1;
        for k in 0..self.dim() {
            let w = (self.upper[k] - self.lower[k]) / self.resolution[k] as f64;
            let pos = (x[k] - self.lower[k]) / w;
            if !(pos >= 0.0) || pos > self.resolution[k] as f64 {
                return None;
            }
            let j = (pos as usize).min(self.resolution[k] - 1);
            flat += j * stride;
            stride *= self.resolution[k];
        }
        Some(flat)
    }

    /// Draws a cell by inverse CDF, then a uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = self.probabilities.len() - 1;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = i;
                break;
            }
        }
        let idx = unflatten(cell, &self.resolution);
        (0..self.dim())
            .map(|k| {
                let w = (self.upper[k] - self.lower[k]) / self.resolution[k] as f64;
                self.lower[k] + w * (idx[k] as f64 + rng.random::<f64>())
            })
            .collect()
    }
}

fn unflatten(mut cell: usize, resolution: &[usize]) -> Vec<usize> {
    resolution
        .iter()
        .map(|&r| {
            let j = cell % r;
            cell /= r;
            j
        })
        .collect()
}

/// `½ Σ_cells |empirical - oracle|`, with samples outside the grid counted in
/// a sentinel cell of oracle mass zero.
pub fn grid_tv<P: AsRef<[f64]>>(samples: &[P], oracle: &GridOracle) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("grid TV needs at least one sample".into()));
    }
    let mut counts = vec![0usize; oracle.probabilities.len()];
    let mut outside = 0usize;
    for s in samples {
        let s = s.as_ref();
        if s.len() != oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dim(),
                got: s.len(),
            });
        }
        match oracle.cell_of(s) {
            Some(c) => counts[c] += 1,
            None => outside += 1,
        }
    }
    let n = samples.len() as f64;
    let inside: f64 = counts
        .iter()
        .zip(&oracle.probabilities)
        .map(|(&c, p)| (c as f64 / n - p).abs())
        .sum();
    Ok(0.5 * (inside + outside as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::normal_cdf;
    use crate::rng::seeded;

    fn normal(mean: f64) -> impl FnMut(&[f64]) -> Result<f64> {
        move |x: &[f64]| Ok(-0.5 * (x[0] - mean) * (x[0] - mean))
    }

    #[test]
    fn probabilities_are_normalized() {
        let g = GridOracle::new(&[-3.0, -2.0], &[3.0, 2.0], &[30, 20], 2, |x| Ok(-x[0] * x[0] - x[1].abs())).unwrap();
        let total: f64 = g.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_consistency() {
        let g = GridOracle::new(&[-5.0], &[5.0], &[100], 4, normal(0.0)).unwrap();
        let mut rng = seeded(1);
        let s: Vec<Vec<f64>> = (0..200_000).map(|_| g.sample(&mut rng)).collect();
        assert!(grid_tv(&s, &g).unwrap() < 0.01);
    }

    #[test]
    fn shifted_gaussians() {
        let g = GridOracle::new(&[-8.0], &[9.0], &[400], 4, normal(1.0)).unwrap();
        let src = GridOracle::new(&[-8.0], &[9.0], &[400], 4, normal(0.0)).unwrap();
        let tv: f64 = g.probabilities().iter().zip(src.probabilities()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!((tv - (2.0 * normal_cdf(0.5) - 1.0)).abs() < 1e-3);
    }

    #[test]
    fn disjoint_supports() {
        let g = GridOracle::new(&[0.0], &[1.0], &[10], 1, |x| Ok(if x[0] < 0.5 { 0.0 } else { f64::NEG_INFINITY })).unwrap();
        let s = vec![vec![0.75]; 100];
        assert!((grid_tv(&s, &g).unwrap() - 1.0).abs() < 1e-12);
        let outside = vec![vec![7.0]; 10];
        assert!((grid_tv(&outside, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!(grid_tv::<Vec<f64>>(&[], &g).is_err());
    }
}
