//! Predictor vocabulary and derivation from raw ensembles.
//!
//! Ensemble statistics (MEAN, MED, Q10, Q90, SIGMA, IQR, MAD, PRt) are
//! computed from the members; HRES, CTRL and the auxiliary fields are looked
//! up by name. Empirical quantiles use linear interpolation between order
//! statistics (type 7). SIGMA is the sample standard deviation; MAD is the
//! mean absolute deviation about the ensemble mean.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ForecastRecord};
use crate::error::{Error, Result};

/// Statistics derived from ensemble members.
pub const ENSEMBLE_STATS: [&str; 13] = [
    "MEAN", "MED", "Q10", "Q90", "PR0", "PR1", "PR3", "PR5", "PR10", "PR20", "SIGMA", "IQR", "MAD",
];

/// Deterministic auxiliary scalars.
pub const AUX_SCALARS: [&str; 7] = ["HU1500", "UX", "VX", "FX", "TCC", "RR6CV", "CAPE"];

/// Auxiliary fields summarized by their ensemble deciles and median
/// (`<base>_q10`, `<base>_q50`, `<base>_q90`).
pub const AUX_QUANTILED: [&str; 14] = [
    "HU", "P", "TCC", "RR6CV", "U10", "V10", "U500", "V500", "FF500", "TPW850", "FLIR6", "FLVIS6",
    "T", "FF10",
];

pub const SET_C: [&str; 4] = ["HRES", "CTRL", "MEAN", "PR0"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorSetName {
    C,
    A,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSet {
    pub name: PredictorSetName,
    pub columns: Vec<String>,
}

pub fn is_known_predictor(name: &str) -> bool {
    if ENSEMBLE_STATS.contains(&name) || AUX_SCALARS.contains(&name) || name == "HRES" || name == "CTRL" {
        return true;
    }
    match name.rsplit_once('_') {
        Some((base, q)) => AUX_QUANTILED.contains(&base) && matches!(q, "q10" | "q50" | "q90"),
        None => false,
    }
}

/// Every name of the full predictor table, in table order (MAD excluded).
pub fn full_vocabulary() -> Vec<String> {
    let mut v: Vec<String> = ["HRES", "CTRL", "MEAN", "MED", "Q10", "Q90", "PR0", "PR1", "PR3", "PR5", "PR10", "PR20", "SIGMA", "IQR"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(AUX_SCALARS.iter().map(|s| s.to_string()));
    for base in AUX_QUANTILED {
        for q in ["q10", "q50", "q90"] {
            v.push(format!("{base}_{q}"));
        }
    }
    v
}

impl PredictorSet {
    /// The classical set: HRES, CTRL, MEAN, PR0.
    pub fn set_c() -> Self {
        Self {
            name: PredictorSetName::C,
            columns: SET_C.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The full table restricted to what the dataset can provide: all
    /// ensemble statistics, CTRL, and HRES plus auxiliaries present as
    /// columns.
    pub fn set_a_for(ds: &Dataset) -> Self {
        let columns = full_vocabulary()
            .into_iter()
            .filter(|n| derivable_from_members(n) || n == "CTRL" || ds.aux_names.iter().any(|a| a == n))
            .collect();
        Self {
            name: PredictorSetName::A,
            columns,
        }
    }

    pub fn custom(columns: Vec<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Config("predictor set is empty".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if !is_known_predictor(c) {
                return Err(Error::UnknownPredictor(c.clone()));
            }
            if columns[..i].contains(c) {
                return Err(Error::Config(format!("duplicate predictor `{c}`")));
            }
        }
        Ok(Self {
            name: PredictorSetName::Custom,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

fn derivable_from_members(name: &str) -> bool {
    ENSEMBLE_STATS.contains(&name)
}

/// Type-7 empirical quantile of an ascending sample.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary statistics of one ensemble, computed once per record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub mean: f64,
    pub med: f64,
    pub q10: f64,
    pub q90: f64,
    pub q25: f64,
    pub q75: f64,
    pub sigma: f64,
    pub mad: f64,
    pr: [f64; 6],
}

const PR_THRESHOLDS: [f64; 6] = [0.0, 1.0, 3.0, 5.0, 10.0, 20.0];

impl EnsembleStats {
    pub fn new(members: &[f64]) -> Self {
        let k = members.len();
        let kf = k as f64;
        let mut s = members.to_vec();
        s.sort_by(f64::total_cmp);
        let mean = s.iter().sum::<f64>() / kf;
        let var = if k > 1 {
            s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (kf - 1.0)
        } else {
            0.0
        };
        let mad = s.iter().map(|x| (x - mean).abs()).sum::<f64>() / kf;
        let mut pr = [0.0; 6];
        for (p, t) in pr.iter_mut().zip(PR_THRESHOLDS) {
            *p = s.iter().filter(|&&x| x > t).count() as f64 / kf;
        }
        Self {
            mean,
            med: quantile_type7(&s, 0.5),
            q10: quantile_type7(&s, 0.1),
            q90: quantile_type7(&s, 0.9),
            q25: quantile_type7(&s, 0.25),
            q75: quantile_type7(&s, 0.75),
            sigma: var.sqrt(),
            mad,
            pr,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "MEAN" => self.mean,
            "MED" => self.med,
            "Q10" => self.q10,
            "Q90" => self.q90,
            "SIGMA" => self.sigma,
            "IQR" => self.q75 - self.q25,
            "MAD" => self.mad,
            "PR0" => self.pr[0],
            "PR1" => self.pr[1],
            "PR3" => self.pr[2],
            "PR5" => self.pr[3],
            "PR10" => self.pr[4],
            "PR20" => self.pr[5],
            _ => return None,
        })
    }
}

/// Looks up one predictor on a record. CTRL falls back to the first member
/// when the record carries no `CTRL` auxiliary column.
pub fn predictor_value(record: &ForecastRecord, stats: &EnsembleStats, name: &str) -> Result<f64> {
    if let Some(v) = stats.get(name) {
        return Ok(v);
    }
    if let Some(v) = record.aux.get(name) {
        return Ok(*v);
    }
    if name == "CTRL" {
        return Ok(record.members[0]);
    }
    if is_known_predictor(name) {
        Err(Error::MissingAux(name.to_string()))
    } else {
        Err(Error::UnknownPredictor(name.to_string()))
    }
}

/// Feature vector of `record` for `columns`, in order.
pub fn derive_predictors(record: &ForecastRecord, columns: &[String]) -> Result<Vec<f64>> {
    let stats = EnsembleStats::new(&record.members);
    columns
        .iter()
        .map(|c| predictor_value(record, &stats, c))
        .collect()
}

/// Row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Schema(format!("row {i} has {} features, expected {p}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            names,
            n_rows: rows.len(),
            data,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let p = self.n_cols();
        self.data[i * p + j] = v;
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::UnknownPredictor(n.clone())))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = (0..self.n_rows)
            .map(|i| idx.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        Self::from_rows(names.to_vec(), &rows)
    }
}

/// Features of the given records for `columns`, computed in parallel.
pub fn feature_matrix(ds: &Dataset, indices: &[usize], columns: &[String]) -> Result<FeatureMatrix> {
    let rows = crate::par::map(indices, |&i| derive_predictors(&ds.records[i], columns));
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    FeatureMatrix::from_rows(columns.to_vec(), &rows)
}
