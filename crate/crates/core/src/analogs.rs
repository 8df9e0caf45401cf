//! Analog ensembles: the verified observations of the past forecasts
//! closest to the current one under a standardized, time-windowed distance
//!
//! ```text
//! d(F_t, A_t′) = Σⱼ (wⱼ/σⱼ)·√(Σ_{i=−t̃..t̃} (F_{j,t+i} − A_{j,t′+i})²)
//! ```
//!
//! Archives are per station. Window offsets are `t̃` steps of `step_hours`.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::data::{format_time, Dataset};
use crate::error::{Error, Result};
use crate::predictive::Predictive;
use crate::predictors::{feature_matrix, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalogConfig {
    /// Half window, in steps.
    pub t_tilde: usize,
    /// Length of one window step in hours.
    pub step_hours: i64,
    pub n_analogs: usize,
}

impl Default for AnalogConfig {
    fn default() -> Self {
        Self {
            t_tilde: 1,
            step_hours: 24,
            n_analogs: 35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    Uniform,
    Correlation,
    Vsf,
}

/// Predictor values over the window: `values[j][i]` is predictor `j` at
/// offset `i − t̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBlock {
    pub values: Vec<Vec<f64>>,
}

/// Weighted, standardized distance between two blocks. Predictors with zero
/// weight are ignored.
pub fn analog_distance(q: &TimeBlock, c: &TimeBlock, weights: &[f64], sigma_f: &[f64]) -> Result<f64> {
    if q.values.len() != weights.len() || c.values.len() != weights.len() || sigma_f.len() != weights.len() {
        return Err(Error::InvalidParams("block, weight and σ_f lengths differ".into()));
    }
    let mut d = 0.0;
    for j in 0..weights.len() {
        if weights[j] == 0.0 {
            continue;
        }
        if q.values[j].len() != c.values[j].len() {
            return Err(Error::InvalidParams("blocks cover different windows".into()));
        }
        let ss: f64 = q.values[j].iter().zip(&c.values[j]).map(|(a, b)| (a - b).powi(2)).sum();
        d += weights[j] / sigma_f[j] * ss.sqrt();
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub valid_time: DateTime<Utc>,
    /// `None` when part of the window is missing.
    pub block: Option<TimeBlock>,
    pub obs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analog {
    pub valid_time: DateTime<Utc>,
    pub distance: f64,
    pub obs: f64,
}

/// The `n` closest candidates with a complete window and an observation,
/// by ascending distance and then earlier valid time.
pub fn find_analogs(
    query: &TimeBlock,
    archive: &[Candidate],
    weights: &[f64],
    sigma_f: &[f64],
    n: usize,
) -> Result<Vec<Analog>> {
    if n == 0 {
        return Err(Error::InvalidParams("n_analogs must be ≥ 1".into()));
    }
    let mut found = Vec::with_capacity(archive.len());
    for c in archive {
        let (Some(block), Some(obs)) = (&c.block, c.obs) else { continue };
        found.push(Analog {
            valid_time: c.valid_time,
            distance: analog_distance(query, block, weights, sigma_f)?,
            obs,
        });
    }
    if found.len() < n {
        return Err(Error::InsufficientData(format!(
            "{} usable analog candidates, need {n}",
            found.len()
        )));
    }
    found.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.valid_time.cmp(&b.valid_time)));
    found.truncate(n);
    Ok(found)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Pearson correlation, `None` when either sample is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(x, y)
}

/// Predictor weights `wⱼ`: all ones, `|r(xⱼ, y)|` on the training data, or
/// selection frequencies normalized to sum to one.
pub fn make_weighting(
    mode: WeightingMode,
    x: &FeatureMatrix,
    y: &[f64],
    frequencies: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<f64>> {
    if x.n_rows == 0 || x.n_cols() == 0 {
        return Err(Error::InsufficientData("empty training data for analog weights".into()));
    }
    let w = match mode {
        WeightingMode::Uniform => vec![1.0; x.n_cols()],
        WeightingMode::Correlation => (0..x.n_cols())
            .map(|j| match pearson(&x.column(j), y) {
                Some(r) => r.abs(),
                None => {
                    log::warn!("predictor {} or the observations are constant; weight 0", x.names[j]);
                    0.0
                }
            })
            .collect(),
        WeightingMode::Vsf => {
            let f = frequencies.ok_or_else(|| Error::Config("vsf weighting needs selection frequencies".into()))?;
            let raw: Vec<f64> = x.names.iter().map(|n| f.get(n).copied().unwrap_or(0.0)).collect();
            let tot: f64 = raw.iter().sum();
            if !(tot > 0.0) {
                return Err(Error::InsufficientData("no selected predictor in the analog set".into()));
            }
            raw.iter().map(|v| v / tot).collect()
        }
    };
    Ok(w)
}

/// Population standard deviation of each column.
pub fn column_sd(x: &FeatureMatrix) -> Vec<f64> {
    (0..x.n_cols())
        .map(|j| {
            let c = x.column(j);
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// All records of one station with their predictor values, indexed by
/// valid time.
pub struct StationSeries {
    pub record_idx: Vec<usize>,
    pub features: FeatureMatrix,
    by_time: BTreeMap<DateTime<Utc>, usize>,
}

impl StationSeries {
    pub fn new(ds: &Dataset, station_id: &str, names: &[String]) -> Result<Self> {
        let record_idx = ds.station_indices(station_id);
        let features = feature_matrix(ds, &record_idx, names)?;
        let by_time = record_idx
            .iter()
            .enumerate()
            .map(|(k, &i)| (ds.records[i].valid_time, k))
            .collect();
        Ok(Self {
            record_idx,
            features,
            by_time,
        })
    }

    /// Window around `time`; `Err` names the first missing offset.
    pub fn block(&self, time: DateTime<Utc>, cfg: &AnalogConfig) -> Result<TimeBlock> {
        let t = cfg.t_tilde as i64;
        let mut rows = Vec::with_capacity(2 * cfg.t_tilde + 1);
        for off in -t..=t {
            let k = self
                .by_time
                .get(&(time + Duration::hours(off * cfg.step_hours)))
                .ok_or_else(|| Error::MissingTimeIndex {
                    time: format_time(&time),
                    offset: off,
                })?;
            rows.push(*k);
        }
        let values = (0..self.features.n_cols())
            .map(|j| rows.iter().map(|&k| self.features.get(k, j)).collect())
            .collect();
        Ok(TimeBlock { values })
    }
}

/// Weights and scales fixed on one station's training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogModel {
    pub station_id: String,
    pub predictors: Vec<String>,
    pub weights: Vec<f64>,
    pub sigma_f: Vec<f64>,
    pub config: AnalogConfig,
}

/// Fits weights and `σ_f` on the training records of one station.
/// Zero-variance predictors are dropped (weight 0) with a warning.
pub fn fit_analog_model(
    ds: &Dataset,
    series: &StationSeries,
    station_id: &str,
    train: &[usize],
    mode: WeightingMode,
    frequencies: Option<&BTreeMap<String, f64>>,
    cfg: &AnalogConfig,
) -> Result<AnalogModel> {
    let pos: BTreeMap<usize, usize> = series.record_idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let rows: Vec<usize> = train
        .iter()
        .filter(|i| ds.observation(**i).is_some())
        .filter_map(|i| pos.get(i).copied())
        .collect();
    if rows.len() < cfg.n_analogs {
        return Err(Error::InsufficientData(format!(
            "station {station_id}: {} training cases for {} analogs",
            rows.len(),
            cfg.n_analogs
        )));
    }
    let x = FeatureMatrix::from_rows(
        series.features.names.clone(),
        &rows.iter().map(|&k| series.features.row(k).to_vec()).collect::<Vec<_>>(),
    )?;
    let y: Vec<f64> = rows
        .iter()
        .map(|&k| ds.observation(series.record_idx[k]).unwrap_or(0.0))
        .collect();
    let mut weights = make_weighting(mode, &x, &y, frequencies)?;
    let sigma_f = column_sd(&x);
    for (j, s) in sigma_f.iter().enumerate() {
        if !(*s > 0.0) && weights[j] != 0.0 {
            log::warn!("station {station_id}: predictor {} has zero variance; dropped", x.names[j]);
            weights[j] = 0.0;
        }
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InsufficientData(format!("station {station_id}: all analog weights are zero")));
    }
    Ok(AnalogModel {
        station_id: station_id.to_string(),
        predictors: x.names.clone(),
        weights,
        sigma_f: sigma_f.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect(),
        config: cfg.clone(),
    })
}

/// Archive candidates for the station's `train` records.
pub fn build_archive(ds: &Dataset, series: &StationSeries, train: &[usize], cfg: &AnalogConfig) -> Vec<Candidate> {
    train
        .iter()
        .map(|&i| {
            let t = ds.records[i].valid_time;
            Candidate {
                valid_time: t,
                block: series.block(t, cfg).ok(),
                obs: ds.observation(i),
            }
        })
        .collect()
}

/// Analog-ensemble predictions for `targets` (record indices of the
/// series' station). Candidates on the target's own date are excluded.
pub fn predict_analogs(
    ds: &Dataset,
    series: &StationSeries,
    model: &AnalogModel,
    archive: &[Candidate],
    targets: &[usize],
) -> Vec<Result<Predictive>> {
    let cfg = &model.config;
    crate::par::map(targets, |&i| {
        let t = ds.records[i].valid_time;
        let q = series.block(t, cfg)?;
        let day = t.date_naive();
        let own: Vec<Candidate> = archive
            .iter()
            .filter(|c| c.valid_time.date_naive() != day)
            .cloned()
            .collect();
        let a = find_analogs(&q, &own, &model.weights, &model.sigma_f, cfg.n_analogs)?;
        Ok(Predictive::Ensemble {
            members: a.iter().map(|a| a.obs).collect(),
        })
    })
}
