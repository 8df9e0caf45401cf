//! Method registry: per-station fitting and prediction for every method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analogs::{
    build_archive, fit_analog_model, predict_analogs, AnalogConfig, AnalogModel, Candidate, StationSeries, TimeBlock,
    WeightingMode,
};
use crate::data::Dataset;
use crate::distributions::EgpParams;
use crate::emos::{emos_cases, emos_covariates, emos_fit, apply_links, station_xi_climatology, EmosConfig, EmosModel, Family};
use crate::error::{Error, Result};
use crate::forests::{forest_weights, grow_forest, Criterion, Forest, ForestConfig};
use crate::predictive::Predictive;
use crate::predictors::{derive_predictors, feature_matrix, PredictorSet};
use crate::selection::{predictor_frequency, select_predictors, SelectionConfig};
use crate::tail_hybrid::fit_egp_tail;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Raw,
    Analogs,
    AnalogsC,
    AnalogsCor,
    AnalogsVsf,
    EmosCsg,
    EmosGev,
    EmosEgp,
    Qrf,
    Gf,
    QrfEgpTail,
    GfEgpTail,
    /// The true conditional law of simulated data.
    Truth,
}

impl Method {
    pub const ALL: [Method; 13] = [
        Method::Raw,
        Method::Analogs,
        Method::AnalogsC,
        Method::AnalogsCor,
        Method::AnalogsVsf,
        Method::EmosCsg,
        Method::EmosGev,
        Method::EmosEgp,
        Method::Qrf,
        Method::Gf,
        Method::QrfEgpTail,
        Method::GfEgpTail,
        Method::Truth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Analogs => "analogs",
            Method::AnalogsC => "analogs_c",
            Method::AnalogsCor => "analogs_cor",
            Method::AnalogsVsf => "analogs_vsf",
            Method::EmosCsg => "emos_csg",
            Method::EmosGev => "emos_gev",
            Method::EmosEgp => "emos_egp",
            Method::Qrf => "qrf",
            Method::Gf => "gf",
            Method::QrfEgpTail => "qrf_egp_tail",
            Method::GfEgpTail => "gf_egp_tail",
            Method::Truth => "truth",
        }
    }

    fn forest(self) -> Option<(Criterion, bool)> {
        match self {
            Method::Qrf => Some((Criterion::Cart, false)),
            Method::Gf => Some((Criterion::Gf, false)),
            Method::QrfEgpTail => Some((Criterion::Cart, true)),
            Method::GfEgpTail => Some((Criterion::Gf, true)),
            _ => None,
        }
    }

    fn emos_family(self) -> Option<Family> {
        match self {
            Method::EmosCsg => Some(Family::Csg),
            Method::EmosGev => Some(Family::Cgev),
            Method::EmosEgp => Some(Family::Egp),
            _ => None,
        }
    }

    fn analog_variant(self) -> Option<(bool, WeightingMode)> {
        match self {
            Method::Analogs => Some((false, WeightingMode::Uniform)),
            Method::AnalogsC => Some((true, WeightingMode::Uniform)),
            Method::AnalogsCor => Some((false, WeightingMode::Correlation)),
            Method::AnalogsVsf => Some((false, WeightingMode::Vsf)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Settings shared by fitting and prediction.
#[derive(Debug, Clone, Default)]
pub struct MethodSettings {
    pub predictors: Option<PredictorSet>,
    pub forest: ForestConfig,
    pub emos: EmosConfig,
    pub analogs: AnalogConfig,
    pub selection: SelectionConfig,
    pub seed: u64,
    /// True laws by `(station, valid time)`, needed by [`Method::Truth`].
    pub truth: Option<BTreeMap<(String, DateTime<Utc>), EgpParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StationModel {
    Passthrough,
    Emos { model: EmosModel },
    Forest { forest: Forest, egp_tail: bool },
    Analogs { model: AnalogModel, archive: Vec<ArchiveEntry> },
}

/// One archive forecast of an analog model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub valid_time: DateTime<Utc>,
    pub block: Vec<Vec<f64>>,
    pub obs: f64,
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Fitted models of one method for every station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub method: Method,
    pub predictors: Vec<String>,
    pub stations: BTreeMap<String, StationModel>,
    /// Stations that could not be fitted, with the reason.
    pub failed: BTreeMap<String, String>,
    /// Cross-station selection frequencies behind VSF weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_frequency: Option<Vec<(String, f64)>>,
}

/// A case that could not be predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub index: usize,
    pub reason: String,
}

/// Seed for one station and fold, mixed so nearby inputs give unrelated
/// streams.
pub fn derive_seed(seed: u64, fold: usize, station: usize) -> u64 {
    let mut z = seed
        .wrapping_add((fold as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((station as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn columns_for(method: Method, ds: &Dataset, s: &MethodSettings) -> Vec<String> {
    match method.analog_variant() {
        Some((true, _)) => PredictorSet::set_c().columns,
        Some((false, _)) => PredictorSet::set_a_for(ds).columns,
        None => s.predictors.clone().unwrap_or_else(|| PredictorSet::set_a_for(ds)).columns,
    }
}

fn by_station(ds: &Dataset, indices: &[usize]) -> BTreeMap<String, Vec<usize>> {
    let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        m.entry(ds.records[i].station_id.clone()).or_default().push(i);
    }
    m
}

/// Selection frequencies over the stations of `train`, for VSF weights.
fn vsf_frequencies(ds: &Dataset, train: &BTreeMap<String, Vec<usize>>, cols: &[String], s: &MethodSettings, fold: usize) -> Result<Vec<(String, f64)>> {
    let stations: Vec<(&String, &Vec<usize>)> = train.iter().collect();
    let results = crate::par::map_range(stations.len(), |k| -> Result<_> {
        let (id, idx) = stations[k];
        let x = feature_matrix(ds, idx, cols)?;
        let y: Vec<f64> = idx.iter().map(|&i| ds.observation(i).unwrap_or(0.0)).collect();
        let cfg = SelectionConfig {
            seed: derive_seed(s.seed ^ 0x5e1e_c7, fold, k),
            ..s.selection.clone()
        };
        select_predictors(id, &x, &y, &cfg)
    });
    let mut ok = Vec::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => log::warn!("selection skipped: {e}"),
        }
    }
    if ok.is_empty() {
        return Err(Error::InsufficientData("predictor selection failed at every station".into()));
    }
    Ok(predictor_frequency(&ok))
}

/// Fits `method` on the observed cases of `train`, one model per station.
/// `fold` only feeds seed derivation.
pub fn fit_method(ds: &Dataset, train: &[usize], method: Method, s: &MethodSettings, fold: usize) -> Result<ModelBundle> {
    let observed: Vec<usize> = train.iter().copied().filter(|&i| ds.observation(i).is_some()).collect();
    let groups = by_station(ds, &observed);
    let cols = columns_for(method, ds, s);
    let predictors = if method.forest().is_some() || method.analog_variant().is_some() { cols.clone() } else { vec![] };
    let vsf = if method == Method::AnalogsVsf {
        Some(vsf_frequencies(ds, &groups, &cols, s, fold)?)
    } else {
        None
    };
    let vsf_map: Option<BTreeMap<String, f64>> = vsf.as_ref().map(|v| v.iter().cloned().collect());
    let all_ids = ds.station_ids();
    let stations: Vec<(&String, &Vec<usize>)> = groups.iter().collect();
    let fitted = crate::par::map_range(stations.len(), |k| -> Result<StationModel> {
        let (id, idx) = stations[k];
        let station_no = all_ids.iter().position(|x| x == id).unwrap_or(k);
        let y: Vec<f64> = idx.iter().map(|&i| ds.observation(i).unwrap_or(0.0)).collect();
        if let Some(family) = method.emos_family() {
            let cases = emos_cases(ds, idx)?;
            let xi = (family == Family::Egp).then(|| station_xi_climatology(&y, &s.emos).0);
            return Ok(StationModel::Emos {
                model: emos_fit(&cases, family, id, xi, &s.emos)?,
            });
        }
        if let Some((criterion, egp_tail)) = method.forest() {
            let x = feature_matrix(ds, idx, &cols)?;
            let forest = grow_forest(&x, &y, &s.forest, criterion, derive_seed(s.seed, fold, station_no))?;
            return Ok(StationModel::Forest { forest, egp_tail });
        }
        if let Some((_, mode)) = method.analog_variant() {
            let series = StationSeries::new(ds, id, &cols)?;
            let model = fit_analog_model(ds, &series, id, idx, mode, vsf_map.as_ref(), &s.analogs)?;
            let archive = build_archive(ds, &series, idx, &s.analogs)
                .into_iter()
                .filter_map(|c| {
                    Some(ArchiveEntry {
                        valid_time: c.valid_time,
                        block: c.block?.values,
                        obs: c.obs?,
                    })
                })
                .collect();
            return Ok(StationModel::Analogs { model, archive });
        }
        Ok(StationModel::Passthrough)
    });
    let mut bundle = ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        method,
        predictors,
        stations: BTreeMap::new(),
        failed: BTreeMap::new(),
        selection_frequency: vsf,
    };
    for ((id, _), r) in stations.iter().zip(fitted) {
        match r {
            Ok(m) => {
                bundle.stations.insert((*id).clone(), m);
            }
            Err(e) if e.is_user_error() => return Err(e),
            Err(e) => {
                log::warn!("{method}: station {id} not fitted: {e}");
                bundle.failed.insert((*id).clone(), e.to_string());
            }
        }
    }
    Ok(bundle)
}

/// Predictive laws for `targets`; failures are returned as rejects.
pub fn predict_method(
    ds: &Dataset,
    targets: &[usize],
    bundle: &ModelBundle,
    s: &MethodSettings,
) -> Result<(Vec<(usize, Predictive)>, Vec<Reject>)> {
    let method = bundle.method;
    if method == Method::Truth && s.truth.is_none() {
        return Err(Error::Config("method `truth` needs a truth file".into()));
    }
    let groups = by_station(ds, targets);
    let mut results: BTreeMap<usize, Result<Predictive>> = BTreeMap::new();
    for (id, idx) in &groups {
        let Some(model) = bundle.stations.get(id) else {
            let why = bundle
                .failed
                .get(id)
                .map(|e| format!("station model unavailable: {e}"))
                .unwrap_or_else(|| "station absent from training data".to_string());
            for &i in idx {
                results.insert(i, Err(Error::InsufficientData(why.clone())));
            }
            continue;
        };
        let preds: Vec<Result<Predictive>> = match model {
            StationModel::Passthrough => crate::par::map(idx, |&i| -> Result<Predictive> {
                let r = &ds.records[i];
                match method {
                    Method::Truth => s
                        .truth
                        .as_ref()
                        .and_then(|t| t.get(&(r.station_id.clone(), r.valid_time)))
                        .map(|&params| Predictive::Egp { params })
                        .ok_or_else(|| Error::InsufficientData("no true law for this case".into())),
                    _ => Ok(Predictive::Ensemble {
                        members: r.members.clone(),
                    }),
                }
            }),
            StationModel::Emos { model } => {
                crate::par::map(idx, |&i| Ok(apply_links(model, &emos_covariates(ds, i)?)))
            }
            StationModel::Forest { forest, egp_tail } => crate::par::map(idx, |&i| {
                let x = derive_predictors(&ds.records[i], &forest.feature_names)?;
                let e = forest_weights(forest, &x)?;
                Ok(if *egp_tail {
                    let h = fit_egp_tail(&e);
                    if h.fallback_used {
                        log::debug!("{method}: EGP tail fit fell back to the ECDF for case {i}");
                    }
                    h.predictive()
                } else {
                    Predictive::Ecdf { ecdf: e }
                })
            }),
            StationModel::Analogs { model, archive } => {
                let series = StationSeries::new(ds, id, &model.predictors)?;
                let cands: Vec<Candidate> = archive
                    .iter()
                    .map(|a| Candidate {
                        valid_time: a.valid_time,
                        block: Some(TimeBlock { values: a.block.clone() }),
                        obs: Some(a.obs),
                    })
                    .collect();
                predict_analogs(ds, &series, model, &cands, idx)
            }
        };
        for (&i, p) in idx.iter().zip(preds) {
            results.insert(i, p);
        }
    }
    let mut ok = Vec::new();
    let mut rejects = Vec::new();
    for &i in targets {
        match results.remove(&i) {
            Some(Ok(p)) => ok.push((i, p)),
            Some(Err(e)) if e.is_user_error() => return Err(e),
            Some(Err(e)) => rejects.push(Reject { index: i, reason: e.to_string() }),
            None => {}
        }
    }
    Ok((ok, rejects))
}
