//! Predictor selection per station: rank predictors by out-of-bag
//! permutation importance in a CART forest, then keep at most `max_k` of
//! them greedily, skipping any predictor strongly correlated with one
//! already kept.
//!
//! This is a simplified importance-ranking procedure, not a full
//! nested-forest variable selection: it only aims for few, informative,
//! non-redundant predictors.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analogs::correlation;
use crate::error::{Error, Result};
use crate::forests::{grow_forest, tree_rng, Criterion, Forest, ForestConfig};
use crate::predictors::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub max_k: usize,
    /// Predictors with `|r|` above this against a chosen one are skipped.
    pub redundancy: f64,
    pub min_rows: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_k: 4,
            redundancy: 0.9,
            min_rows: 200,
            forest: ForestConfig {
                n_trees: 200,
                min_node_size: 5,
                ..ForestConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub station_id: String,
    pub chosen: Vec<String>,
    pub importance: BTreeMap<String, f64>,
}

/// Mean over trees of the increase in out-of-bag squared error when one
/// predictor is permuted among the tree's out-of-bag rows.
pub fn permutation_importance(forest: &Forest, x: &FeatureMatrix, y: &[f64]) -> Vec<f64> {
    let p = x.n_cols();
    let per_tree: Vec<Option<Vec<f64>>> = crate::par::map_range(forest.n_trees(), |t| {
        let oob = &forest.trees[t].oob;
        if oob.is_empty() {
            return None;
        }
        let mse = |rows: &[Vec<f64>]| {
            rows.iter()
                .zip(oob)
                .map(|(r, &i)| (forest.tree_mean(t, r) - y[i as usize]).powi(2))
                .sum::<f64>()
                / oob.len() as f64
        };
        let base_rows: Vec<Vec<f64>> = oob.iter().map(|&i| x.row(i as usize).to_vec()).collect();
        let base = mse(&base_rows);
        // Stream offset keeps permutations apart from the growing streams.
        let mut rng = tree_rng(forest.seed ^ 0x9e37_79b9_7f4a_7c15, t);
        Some(
            (0..p)
                .map(|j| {
                    let mut col: Vec<f64> = base_rows.iter().map(|r| r[j]).collect();
                    col.shuffle(&mut rng);
                    let rows: Vec<Vec<f64>> = base_rows
                        .iter()
                        .zip(&col)
                        .map(|(r, &v)| {
                            let mut r = r.clone();
                            r[j] = v;
                            r
                        })
                        .collect();
                    mse(&rows) - base
                })
                .collect(),
        )
    });
    let used: Vec<Vec<f64>> = per_tree.into_iter().flatten().collect();
    if used.is_empty() {
        return vec![0.0; p];
    }
    (0..p)
        .map(|j| used.iter().map(|v| v[j]).sum::<f64>() / used.len() as f64)
        .collect()
}

/// Selects at most `cfg.max_k` predictors for one station.
pub fn select_predictors(
    station_id: &str,
    x: &FeatureMatrix,
    y: &[f64],
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    if x.n_cols() < 2 {
        return Err(Error::InsufficientData(format!(
            "station {station_id}: selection needs ≥ 2 predictors, got {}",
            x.n_cols()
        )));
    }
    if y.len() < cfg.min_rows {
        return Err(Error::InsufficientData(format!(
            "station {station_id}: {} rows for selection, need {}",
            y.len(),
            cfg.min_rows
        )));
    }
    if cfg.max_k == 0 {
        return Ok(SelectionResult {
            station_id: station_id.to_string(),
            chosen: vec![],
            importance: BTreeMap::new(),
        });
    }
    let forest = grow_forest(x, y, &cfg.forest, Criterion::Cart, cfg.seed)?;
    let imp = permutation_importance(&forest, x, y);
    let mut order: Vec<usize> = (0..x.n_cols()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for j in order {
        if chosen.len() >= cfg.max_k || !(imp[j] > 0.0) {
            break;
        }
        let cj = x.column(j);
        let redundant = chosen.iter().any(|&k| {
            let ck = x.column(k);
            // Identical columns have no defined r when constant; treat as redundant.
            correlation(&cj, &ck).map_or(cj == ck, |r| r.abs() > cfg.redundancy)
        });
        if !redundant {
            chosen.push(j);
        }
    }
    Ok(SelectionResult {
        station_id: station_id.to_string(),
        chosen: chosen.iter().map(|&j| x.names[j].clone()).collect(),
        importance: x.names.iter().cloned().zip(imp).collect(),
    })
}

/// Fraction of stations selecting each predictor, highest first (ties by
/// name). Predictors never selected are absent.
pub fn predictor_frequency(results: &[SelectionResult]) -> Vec<(String, f64)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in results {
        for c in &r.chosen {
            *counts.entry(c).or_default() += 1;
        }
    }
    let n = results.len().max(1) as f64;
    let mut out: Vec<(String, f64)> = counts.into_iter().map(|(k, c)| (k.to_string(), c as f64 / n)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn write_frequency_csv<W: Write>(w: W, freq: &[(String, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["predictor", "frequency"])?;
    for (name, f) in freq {
        wtr.write_record([name.as_str(), &f.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
