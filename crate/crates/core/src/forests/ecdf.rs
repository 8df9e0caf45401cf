use serde::{Deserialize, Serialize};

use crate::distributions::Cdf;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;
const CUM_SLACK: f64 = 1e-12;

/// Weighted empirical CDF `F̂(y) = Σ ωᵢ·1{vᵢ ≤ y}`.
///
/// Values are kept sorted with duplicates merged, so every stored value
/// carries strictly positive weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEcdf {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::InvalidParams(format!(
                "ECDF needs matching nonempty values/weights ({} vs {})",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParams(format!("negative or non-finite weight {w}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value {v}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(weights).filter(|p| p.1 > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            if values.last() == Some(&v) {
                *weights.last_mut().unwrap() += w;
            } else {
                values.push(v);
                weights.push(w);
            }
        }
        Ok(Self { values, weights })
    }

    /// Equal weights on a sample.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len() as f64;
        Self::new(values.to_vec(), vec![w; values.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= y);
        self.weights[..k].iter().sum::<f64>().min(1.0)
    }

    /// `F̂(y⁻)`.
    pub fn cdf_left(&self, y: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < y);
        self.weights[..k].iter().sum::<f64>().min(1.0)
    }

    /// Smallest value whose cumulative weight reaches `prob`.
    pub fn quantile(&self, prob: f64) -> f64 {
        let mut cum = 0.0;
        for (v, w) in self.values.iter().zip(&self.weights) {
            cum += w;
            if cum >= prob - CUM_SLACK {
                return *v;
            }
        }
        self.max()
    }

    /// Kernel-form CRPS `Σωᵢ|vᵢ−y| − ½ΣΣωᵢωⱼ|vᵢ−vⱼ|`, in O(n).
    pub fn crps(&self, y: f64) -> f64 {
        let mut first = 0.0;
        let mut pair = 0.0;
        let mut w_below = 0.0;
        let mut wv_below = 0.0;
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            first += w * (v - y).abs();
            pair += w * (v * w_below - wv_below);
            w_below += w;
            wv_below += w * v;
        }
        // `pair` holds half of the double sum.
        first - pair
    }
}

impl Cdf for WeightedEcdf {
    fn cdf(&self, x: f64) -> f64 {
        WeightedEcdf::cdf(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Generalized inverse of an ECDF.
pub fn ecdf_quantile(e: &WeightedEcdf, prob: f64) -> f64 {
    e.quantile(prob)
}
