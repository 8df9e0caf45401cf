//! Bagged regression trees: quantile regression forests (CART splits) and
//! gradient forests (quantile-gradient splits), both predicting through a
//! weighted empirical CDF over the training responses.
//!
//! Tree `t` draws its bootstrap sample, predictor subsets and quantile
//! orders from a ChaCha8 stream keyed by `(seed, t)`, so a forest is the same
//! whether its trees are grown in parallel or one after another.

mod ecdf;
mod split;

pub use ecdf::{ecdf_quantile, WeightedEcdf};
pub use split::{
    best_split, gf_indicators, lower_quantile, split_score_cart, split_score_gf, Split, SplitRule,
    MIN_RELATIVE_GAIN, TIE_TOLERANCE,
};

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::FeatureMatrix;

/// Version tag written into serialized forests.
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Cart,
    Gf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Predictors tried per split; `None` means `⌈p/3⌉`.
    pub mtry: Option<usize>,
    /// Nodes with fewer than `2·min_node_size` samples become leaves.
    pub min_node_size: usize,
    /// Smallest allowed child.
    pub min_leaf_size: usize,
    /// Bootstrap size as a fraction of the training rows.
    pub sample_fraction: f64,
    pub replace: bool,
    /// Quantile orders for gradient splits, one drawn per split.
    pub gf_orders: Vec<f64>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_node_size: 10,
            min_leaf_size: 1,
            sample_fraction: 1.0,
            replace: true,
            gf_orders: vec![0.1, 0.5, 0.9],
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be ≥ 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(Error::Config(format!("mtry {m} outside 1..={p}")));
            }
        }
        if self.min_node_size == 0 || self.min_leaf_size == 0 {
            return Err(Error::Config("min_node_size and min_leaf_size must be ≥ 1".into()));
        }
        if !(self.sample_fraction > 0.0 && (self.replace || self.sample_fraction <= 1.0)) {
            return Err(Error::Config(format!("bad sample_fraction {}", self.sample_fraction)));
        }
        if self.gf_orders.is_empty() || self.gf_orders.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Config("gf_orders must be nonempty and inside (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        cut: f64,
        left: u32,
        right: u32,
    },
    /// Training rows in the leaf with their bootstrap multiplicities.
    Leaf { rows: Vec<u32>, counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Rows left out of the bootstrap sample; not serialized.
    #[serde(skip)]
    pub oob: Vec<u32>,
}

impl Tree {
    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, cut, left, right } => {
                    k = if x[*feature] <= *cut { *left } else { *right } as usize;
                }
                Node::Leaf { .. } => return k,
            }
        }
    }

    pub fn leaf(&self, x: &[f64]) -> (&[u32], &[u32]) {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { rows, counts } => (rows, counts),
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub criterion: Criterion,
    pub config: ForestConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// Training responses, indexed by row.
    pub responses: Vec<f64>,
    pub trees: Vec<Tree>,
}

/// The RNG stream of tree `t`.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

fn grow_tree(
    x: &FeatureMatrix,
    y: &[f64],
    cfg: &ForestConfig,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = y.len();
    let p = x.n_cols();
    let m = ((cfg.sample_fraction * n as f64).round() as usize).max(1);
    let samples: Vec<usize> = if cfg.replace {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    } else {
        let mut s = sample_indices(rng, n, m.min(n)).into_vec();
        s.sort_unstable();
        s
    };
    let mut drawn = vec![false; n];
    for &i in &samples {
        drawn[i] = true;
    }
    let oob = (0..n).filter(|&i| !drawn[i]).map(|i| i as u32).collect();

    let mtry = cfg.mtry_for(p);
    let mut nodes: Vec<Node> = vec![Node::Leaf { rows: vec![], counts: vec![] }];
    let mut stack = vec![(0usize, samples)];
    while let Some((id, s)) = stack.pop() {
        let split = if s.len() < 2 * cfg.min_node_size {
            None
        } else {
            let features = sample_indices(rng, p, mtry).into_vec();
            let rule = match criterion {
                Criterion::Cart => SplitRule::Cart,
                Criterion::Gf => SplitRule::Gf {
                    q: cfg.gf_orders[rng.random_range(0..cfg.gf_orders.len())],
                },
            };
            best_split(x, y, &s, &features, rule, cfg.min_leaf_size)
        };
        match split {
            None => nodes[id] = make_leaf(&s),
            Some(sp) => {
                let (l, r): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| x.get(i, sp.feature) <= sp.cut);
                let li = nodes.len();
                nodes.push(Node::Leaf { rows: vec![], counts: vec![] });
                nodes.push(Node::Leaf { rows: vec![], counts: vec![] });
                nodes[id] = Node::Split {
                    feature: sp.feature,
                    cut: sp.cut,
                    left: li as u32,
                    right: li as u32 + 1,
                };
                // Right pushed first so the left subtree is grown first.
                stack.push((li + 1, r));
                stack.push((li, l));
            }
        }
    }
    Tree { nodes, oob }
}

fn make_leaf(samples: &[usize]) -> Node {
    let mut s = samples.to_vec();
    s.sort_unstable();
    let mut rows: Vec<u32> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for i in s {
        if rows.last() == Some(&(i as u32)) {
            *counts.last_mut().unwrap() += 1;
        } else {
            rows.push(i as u32);
            counts.push(1);
        }
    }
    Node::Leaf { rows, counts }
}

/// Grows `cfg.n_trees` trees on bootstrap copies of `(x, y)`.
pub fn grow_forest(
    x: &FeatureMatrix,
    y: &[f64],
    cfg: &ForestConfig,
    criterion: Criterion,
    seed: u64,
) -> Result<Forest> {
    cfg.validate(x.n_cols())?;
    if x.n_rows != y.len() {
        return Err(Error::Schema(format!("{} feature rows but {} responses", x.n_rows, y.len())));
    }
    if y.len() < cfg.min_node_size.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} training rows, need at least {}",
            y.len(),
            cfg.min_node_size
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite response {v}")));
    }
    let trees = crate::par::map_range(cfg.n_trees, |t| grow_tree(x, y, cfg, criterion, &mut tree_rng(seed, t)));
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        criterion,
        config: cfg.clone(),
        seed,
        feature_names: x.names.clone(),
        responses: y.to_vec(),
        trees,
    })
}

/// Weights `ωᵢ(x)`: in every tree each training row in the leaf reached by
/// `x` receives `multiplicity / (leaf size · n_trees)`.
pub fn forest_weights(f: &Forest, x: &[f64]) -> Result<WeightedEcdf> {
    if x.len() != f.feature_names.len() {
        return Err(Error::Schema(format!(
            "feature vector has {} entries, forest uses {}",
            x.len(),
            f.feature_names.len()
        )));
    }
    let (rows, w) = f.row_weights(x);
    let values = rows.iter().map(|&i| f.responses[i as usize]).collect();
    WeightedEcdf::new(values, w)
}

/// As [`forest_weights`], with features given by name.
pub fn forest_weights_named(f: &Forest, names: &[String], values: &[f64]) -> Result<WeightedEcdf> {
    let x: Vec<f64> = f
        .feature_names
        .iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .map(|j| values[j])
                .ok_or_else(|| Error::UnknownPredictor(n.clone()))
        })
        .collect::<Result<_>>()?;
    forest_weights(f, &x)
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Training rows and their weights for `x`, rows ascending.
    pub fn row_weights(&self, x: &[f64]) -> (Vec<u32>, Vec<f64>) {
        let t = self.trees.len() as f64;
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for tree in &self.trees {
            let (rows, counts) = tree.leaf(x);
            let size: u32 = counts.iter().sum();
            let scale = 1.0 / (size as f64 * t);
            pairs.extend(rows.iter().zip(counts).map(|(&r, &c)| (r, c as f64 * scale)));
        }
        pairs.sort_by_key(|p| p.0);
        let mut rows = Vec::new();
        let mut w: Vec<f64> = Vec::new();
        for (r, v) in pairs {
            if rows.last() == Some(&r) {
                *w.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                w.push(v);
            }
        }
        (rows, w)
    }

    /// Leaf mean response of one tree at `x`.
    pub fn tree_mean(&self, t: usize, x: &[f64]) -> f64 {
        let (rows, counts) = self.trees[t].leaf(x);
        let (mut s, mut n) = (0.0, 0.0);
        for (&r, &c) in rows.iter().zip(counts) {
            s += self.responses[r as usize] * c as f64;
            n += c as f64;
        }
        s / n
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Forest = serde_json::from_str(s)?;
        if f.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "forest format version {} (expected {FOREST_FORMAT_VERSION})",
                f.format_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
