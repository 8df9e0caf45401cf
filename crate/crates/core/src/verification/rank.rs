use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::predictive::Predictive;

/// Rank of `y` in the pooled set `members ∪ {y}`, in `1..=K+1`. Ties are
/// placed uniformly at random among the tied positions.
pub fn rank_of_obs<R: Rng + ?Sized>(members: &[f64], y: f64, rng: &mut R) -> usize {
    let below = members.iter().filter(|&&m| m < y).count();
    let ties = members.iter().filter(|&&m| m == y).count();
    below + 1 + if ties > 0 { rng.random_range(0..=ties) } else { 0 }
}

/// Randomized PIT: uniform on `[F(y⁻), F(y)]`, which is `F(y)` wherever
/// the CDF is continuous.
pub fn pit_value<R: Rng + ?Sized>(pred: &Predictive, y: f64, rng: &mut R) -> f64 {
    let hi = pred.cdf(y);
    let lo = pred.cdf_left(y);
    if hi > lo {
        lo + rng.random::<f64>() * (hi - lo)
    } else {
        hi
    }
}

/// Counts over `K + 1` rank bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub counts: Vec<u64>,
    pub n_cases: u64,
}

impl RankHistogram {
    pub fn new(counts: Vec<u64>) -> Self {
        let n_cases = counts.iter().sum();
        Self { counts, n_cases }
    }

    /// Histogram of ranks in `1..=k+1`.
    pub fn from_ranks(ranks: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k + 1];
        for &r in ranks {
            if r == 0 || r > k + 1 {
                return Err(Error::Domain(format!("rank {r} outside 1..={}", k + 1)));
            }
            counts[r - 1] += 1;
        }
        Ok(Self::new(counts))
    }

    /// Histogram of values in `[0, 1]` over `k + 1` equal bins.
    pub fn from_pit(pits: &[f64], k: usize) -> Self {
        let mut counts = vec![0u64; k + 1];
        for &p in pits {
            counts[pit_bin(p, k)] += 1;
        }
        Self::new(counts)
    }

    /// `K`, the ensemble size the bins correspond to.
    pub fn k(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_cases.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

pub(crate) fn pit_bin(p: f64, k: usize) -> usize {
    ((p.clamp(0.0, 1.0) * (k + 1) as f64).floor() as usize).min(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub ez: f64,
    pub vz: f64,
    pub omega: f64,
}

/// `E(Z)`, `V(Z) = 12·K/(K+2)·Var(Z)` (population variance) and the
/// normalized entropy `Ω`, with `Z = (rank − 1)/K`.
pub fn histogram_stats(h: &RankHistogram) -> Result<HistogramStats> {
    if h.n_cases == 0 {
        return Err(Error::InsufficientData("empty rank histogram".into()));
    }
    let k = h.k() as f64;
    let f = h.frequencies();
    let ez: f64 = f.iter().enumerate().map(|(j, fj)| fj * j as f64 / k).sum();
    let var: f64 = f.iter().enumerate().map(|(j, fj)| fj * (j as f64 / k - ez).powi(2)).sum();
    let ent: f64 = f.iter().filter(|&&fj| fj > 0.0).map(|fj| -fj * fj.ln()).sum();
    Ok(HistogramStats {
        ez,
        vz: 12.0 * k / (k + 2.0) * var,
        omega: ent / (k + 1.0).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestComponent {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
}

/// Decomposition of the Pearson χ² of a rank histogram into slope,
/// convexity and residual parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessTest {
    pub slope: TestComponent,
    pub convexity: TestComponent,
    /// `None` when `K < 3` leaves no residual degrees of freedom.
    pub residual: Option<TestComponent>,
    pub alpha: f64,
    pub reject: bool,
}

/// Orthonormal linear and quadratic contrasts over `b` bins, both
/// orthogonal to the constant vector.
fn contrasts(b: usize) -> (Vec<f64>, Vec<f64>) {
    let c = (b as f64 - 1.0) / 2.0;
    let mut lin: Vec<f64> = (0..b).map(|i| i as f64 - c).collect();
    normalize(&mut lin);
    let mut quad: Vec<f64> = (0..b).map(|i| (i as f64 - c).powi(2)).collect();
    let m = quad.iter().sum::<f64>() / b as f64;
    quad.iter_mut().for_each(|v| *v -= m);
    let proj: f64 = quad.iter().zip(&lin).map(|(a, b)| a * b).sum();
    quad.iter_mut().zip(&lin).for_each(|(q, l)| *q -= proj * l);
    normalize(&mut quad);
    (lin, quad)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn component(stat: f64, df: usize, level: f64) -> TestComponent {
    let p_value = ChiSquared::new(df as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN);
    TestComponent {
        statistic: stat,
        df,
        p_value,
        reject: p_value < level,
    }
}

/// Flatness test on a rank histogram. Standardized bin deviations
/// `(cᵢ − n/B)/√(n/B)` are projected onto orthonormal linear and quadratic
/// contrasts (each square ~ χ²₁ under flatness); what is left of the Pearson
/// χ² is ~ χ²_{K−2}. Each component is tested at `α/m` for `m` components,
/// and the histogram is rejected when any component is.
pub fn flatness_test(h: &RankHistogram, alpha: f64) -> Result<FlatnessTest> {
    let b = h.counts.len();
    if b < 3 {
        return Err(Error::InsufficientData("flatness test needs K ≥ 2".into()));
    }
    if h.n_cases == 0 {
        return Err(Error::InsufficientData("empty rank histogram".into()));
    }
    if (h.n_cases as usize) < 10 * b {
        log::warn!("flatness test on {} cases over {b} bins; χ² approximation is rough", h.n_cases);
    }
    let e = h.n_cases as f64 / b as f64;
    let d: Vec<f64> = h.counts.iter().map(|&c| (c as f64 - e) / e.sqrt()).collect();
    let (lin, quad) = contrasts(b);
    let dot = |u: &[f64]| u.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
    let s_lin = dot(&lin).powi(2);
    let s_quad = dot(&quad).powi(2);
    let chi2: f64 = d.iter().map(|x| x * x).sum();
    let n_comp = if b > 3 { 3 } else { 2 };
    let level = alpha / n_comp as f64;
    let slope = component(s_lin, 1, level);
    let convexity = component(s_quad, 1, level);
    let residual = (b > 3).then(|| component((chi2 - s_lin - s_quad).max(0.0), b - 3, level));
    let reject = slope.reject || convexity.reject || residual.is_some_and(|r| r.reject);
    Ok(FlatnessTest {
        slope,
        convexity,
        residual,
        alpha,
        reject,
    })
}
