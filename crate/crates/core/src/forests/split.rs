//! Split criteria and exhaustive best-split search.
//!
//! Both criteria reduce to sums over the two children. With `S` the node
//! total, `Sₗ`, `Sᵣ` the child totals and `n`, `nₗ`, `nᵣ` the sizes,
//!
//! ```text
//! Sₗ²/nₗ + Sᵣ²/nᵣ − S²/n = (Sₗ·nᵣ − Sᵣ·nₗ)² / (n·nₗ·nᵣ)
//! ```
//!
//! which is the CART variance reduction on responses and the gradient-forest
//! gain on the indicators `ρᵢ`. The right-hand form is used by the search: it
//! is nonnegative by construction and exact on 0/1 indicators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::FeatureMatrix;

/// Relative margin below which two candidate scores count as tied; the
/// first-encountered candidate is kept.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// CART splits must reduce the node sum of squares by more than this
/// fraction, which keeps rounding noise on constant responses from splitting.
pub const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Variance reduction on the responses.
    Cart,
    /// Quantile-gradient criterion at order `q`.
    Gf { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x ≤ cut` go left.
    pub cut: f64,
    pub gain: f64,
    pub n_left: usize,
}

fn sum_sq_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum()
}

fn check_children(parent: &[f64], left: &[f64], right: &[f64]) -> Result<()> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::InvalidParams("empty child in split".into()));
    }
    if left.len() + right.len() != parent.len() {
        return Err(Error::InvalidParams("children do not partition the parent".into()));
    }
    Ok(())
}

/// `v(D₀) − v(D₁) − v(D₂)` with `v(D) = Σ(Y − Ȳ(D))²`.
pub fn split_score_cart(parent: &[f64], left: &[f64], right: &[f64]) -> Result<f64> {
    check_children(parent, left, right)?;
    Ok((sum_sq_dev(parent) - sum_sq_dev(left) - sum_sq_dev(right)).max(0.0))
}

/// Lower empirical `q`-quantile: the smallest order statistic whose ECDF
/// value reaches `q`.
pub fn lower_quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    lower_quantile_sorted(&s, q)
}

fn lower_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

/// Gradient indicators `ρᵢ = 1{Yᵢ > θ̂}` against the parent quantile.
pub fn gf_indicators(parent: &[f64], q: f64) -> Vec<f64> {
    let theta = lower_quantile(parent, q);
    parent.iter().map(|&y| if y > theta { 1.0 } else { 0.0 }).collect()
}

/// `Δ = Σⱼ (Σ_{i∈Dⱼ} ρᵢ)² / |Dⱼ|`, with `ρ` computed on the parent node.
/// Larger is better; `Δ` equals `(Σρ)²/n` when the children are balanced.
pub fn split_score_gf(parent: &[f64], left: &[f64], right: &[f64], q: f64) -> Result<f64> {
    check_children(parent, left, right)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParams(format!("quantile order {q} outside (0,1)")));
    }
    let theta = lower_quantile(parent, q);
    let s = |d: &[f64]| d.iter().filter(|&&y| y > theta).count() as f64;
    let (sl, sr) = (s(left), s(right));
    Ok(sl * sl / left.len() as f64 + sr * sr / right.len() as f64)
}

/// Pseudo-responses on which the scan runs: centered responses for CART,
/// indicators for GF. Returns `None` when no split can help.
fn pseudo_responses(y: &[f64], samples: &[usize], rule: SplitRule) -> Option<(Vec<f64>, f64)> {
    let vals: Vec<f64> = samples.iter().map(|&i| y[i]).collect();
    let first = vals[0];
    if vals.iter().all(|&v| v == first) {
        return None;
    }
    match rule {
        SplitRule::Cart => {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let c: Vec<f64> = vals.iter().map(|v| v - m).collect();
            let ss = c.iter().map(|v| v * v).sum::<f64>();
            Some((c, MIN_RELATIVE_GAIN * ss))
        }
        SplitRule::Gf { q } => {
            let theta = lower_quantile(&vals, q);
            let rho: Vec<f64> = vals.iter().map(|&v| if v > theta { 1.0 } else { 0.0 }).collect();
            Some((rho, 0.0))
        }
    }
}

/// Exhaustive search over `features` (in the given order) and all midpoints
/// between consecutive distinct values. `samples` may repeat rows
/// (bootstrap multiplicity). Both children must hold at least `min_leaf`
/// samples. Returns `None` unless some split has positive gain.
pub fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    samples: &[usize],
    features: &[usize],
    rule: SplitRule,
    min_leaf: usize,
) -> Option<Split> {
    let n = samples.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let (r, floor) = pseudo_responses(y, samples, rule)?;
    let total: f64 = r.iter().sum();
    let nf = n as f64;
    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for &f in features {
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| x.get(samples[a], f).total_cmp(&x.get(samples[b], f)));
        let mut sl = 0.0;
        for k in 0..n - 1 {
            sl += r[order[k]];
            let nl = k + 1;
            let xa = x.get(samples[order[k]], f);
            let xb = x.get(samples[order[k + 1]], f);
            if xa == xb || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let (nlf, nrf) = (nl as f64, (n - nl) as f64);
            let sr = total - sl;
            let d = sl * nrf - sr * nlf;
            let gain = d * d / (nf * nlf * nrf);
            if !(gain > floor) {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain + TIE_TOLERANCE * b.gain,
            };
            if better {
                best = Some(Split {
                    feature: f,
                    cut: 0.5 * (xa + xb),
                    gain,
                    n_left: nl,
                });
            }
        }
    }
    best
}
