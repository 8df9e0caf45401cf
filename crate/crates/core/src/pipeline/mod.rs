//! Config-driven workflow behind the `pluvio` CLI.
//!
//! * `simulate`: writes `data.csv` and `truth.csv` from the `[simulate]`
//!   scenario;
//! * `fit`: fits every configured method on all observed cases and writes
//!   `models/<method>.json`;
//! * `predict`: applies saved models to the data, writing
//!   `predictions/<method>.jsonl` and `predictions/<method>_rejects.csv`;
//! * `verify`: cross-validated predictions and scores per method, written
//!   as `cv_predictions/<method>.jsonl`, `reports/<method>.json`,
//!   `rank_histograms.csv`, `roc.csv`, `rejects.csv` and `summary.csv`;
//! * `report`: rebuilds `summary.csv` from `reports/*.json`.
//!
//! Every output is a pure function of the config, so reruns are
//! byte-identical whatever the number of worker threads.

mod methods;

pub use methods::{
    derive_seed, fit_method, predict_method, ArchiveEntry, Method, MethodSettings, ModelBundle, Reject, StationModel,
    BUNDLE_FORMAT_VERSION,
};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analogs::AnalogConfig;
use crate::cv::{make_cv_plan, CvScheme};
use crate::data::{format_time, load_dataset, write_dataset, Dataset, Schema};
use crate::emos::EmosConfig;
use crate::error::{Error, Result};
use crate::forests::ForestConfig;
use crate::predictive::Predictive;
use crate::predictors::PredictorSet;
use crate::selection::{write_frequency_csv, SelectionConfig};
use crate::simlab::{read_truth_csv, simulate_scenario, write_truth_csv, ScenarioSpec};
use crate::verification::{
    fair_crps, score_predictions, write_rank_histogram_csv, write_roc_csv, ScoreReport, VerifyConfig,
};

pub const CONFIG_VERSION: u32 = 1;

/// Pipeline configuration, read from TOML. Relative paths are resolved
/// against the config file's directory. The top-level `seed` replaces the
/// seeds of the sub-tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    /// Input CSV; defaults to `<out>/data.csv`.
    pub data: Option<PathBuf>,
    /// Column mapping for nonstandard CSV headers.
    pub schema: Option<PathBuf>,
    /// Truth sidecar for the `truth` method; defaults to `<out>/truth.csv`
    /// when that file exists.
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
    pub methods: Vec<String>,
    /// `"a"`, `"c"`, or ignored when `predictors` lists custom columns.
    pub predictor_set: String,
    pub predictors: Option<Vec<String>>,
    pub cv: CvScheme,
    pub seed: u64,
    pub jobs: usize,
    pub forest: ForestConfig,
    pub emos: EmosConfig,
    pub analogs: AnalogConfig,
    pub selection: SelectionConfig,
    pub verify: VerifyConfig,
    pub simulate: ScenarioSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            data: None,
            schema: None,
            truth: None,
            out: PathBuf::from("out"),
            methods: vec!["raw".into()],
            predictor_set: "a".into(),
            predictors: None,
            cv: CvScheme::MonthlyBlockCv,
            seed: 1,
            jobs: 1,
            forest: ForestConfig::default(),
            emos: EmosConfig::default(),
            analogs: AnalogConfig::default(),
            selection: SelectionConfig::default(),
            verify: VerifyConfig::default(),
            simulate: ScenarioSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out);
        for p in [&mut cfg.data, &mut cfg.schema, &mut cfg.truth].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(Error::Config("no method configured".into()));
        }
        let mut out: Vec<Method> = Vec::new();
        for m in &self.methods {
            let m: Method = m.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("data.csv"))
    }

    fn truth_path(&self) -> Option<PathBuf> {
        match &self.truth {
            Some(p) => Some(p.clone()),
            None => Some(self.out.join("truth.csv")).filter(|p| p.exists()),
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let schema = match &self.schema {
            Some(p) => Schema::from_toml_file(p)?,
            None => Schema::default(),
        };
        load_dataset(&self.data_path(), &schema)
    }

    /// Method settings with seeds taken from the top-level seed.
    pub fn settings(&self, ds: &Dataset, methods: &[Method]) -> Result<MethodSettings> {
        let predictors = match (&self.predictors, self.predictor_set.as_str()) {
            (Some(cols), _) => Some(PredictorSet::custom(cols.clone())?),
            (None, "a") => Some(PredictorSet::set_a_for(ds)),
            (None, "c") => Some(PredictorSet::set_c()),
            (None, other) => return Err(Error::Config(format!("unknown predictor set `{other}`"))),
        };
        let truth = if methods.contains(&Method::Truth) {
            let p = self
                .truth_path()
                .ok_or_else(|| Error::Config("method `truth` needs a `truth` file".into()))?;
            Some(read_truth_csv(File::open(&p)?)?)
        } else {
            None
        };
        Ok(MethodSettings {
            predictors,
            forest: self.forest.clone(),
            emos: self.emos.clone(),
            analogs: self.analogs.clone(),
            selection: SelectionConfig {
                seed: self.seed,
                ..self.selection.clone()
            },
            seed: self.seed,
            truth,
        })
    }

    fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            seed: self.seed,
            ..self.verify.clone()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    station_id: &'a str,
    valid_time: String,
    obs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
    prediction: &'a Predictive,
}

fn write_predictions(path: &Path, ds: &Dataset, preds: &[(usize, Option<usize>, Predictive)]) -> Result<()> {
    let mut w = create(path)?;
    for (i, fold, p) in preds {
        let r = &ds.records[*i];
        let line = PredictionLine {
            station_id: &r.station_id,
            valid_time: format_time(&r.valid_time),
            obs: ds.observation(*i),
            fold: *fold,
            prediction: p,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_rejects(path: &Path, ds: &Dataset, rows: &[(Method, Option<usize>, Reject)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["method", "fold", "station_id", "valid_time", "reason"])?;
    for (m, fold, r) in rows {
        let rec = &ds.records[r.index];
        w.write_record([
            m.name().to_string(),
            fold.map(|f| f.to_string()).unwrap_or_default(),
            rec.station_id.clone(),
            format_time(&rec.valid_time),
            r.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the scenario's data and truth sidecar (by default into the
/// output directory).
pub fn run_simulate(cfg: &PipelineConfig) -> Result<PathBuf> {
    let spec = ScenarioSpec {
        seed: cfg.seed,
        ..cfg.simulate.clone()
    };
    let sc = simulate_scenario(&spec)?;
    let data = cfg.data_path();
    let mut w = create(&data)?;
    write_dataset(&mut w, &sc.dataset)?;
    w.flush()?;
    let mut t = create(&cfg.truth.clone().unwrap_or_else(|| cfg.out.join("truth.csv")))?;
    write_truth_csv(&mut t, &sc)?;
    t.flush()?;
    Ok(data)
}

/// Fits each method on every observed case.
pub fn run_fit(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ds = cfg.load_data()?;
    let methods = cfg.method_list()?;
    let s = cfg.settings(&ds, &methods)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut written = Vec::new();
    for m in methods {
        log::info!("fitting {m}");
        let bundle = fit_method(&ds, &all, m, &s, 0)?;
        let path = cfg.out.join("models").join(format!("{m}.json"));
        write_json(&path, &bundle)?;
        if let Some(freq) = &bundle.selection_frequency {
            write_frequency_csv(create(&cfg.out.join("selection_frequency.csv"))?, freq)?;
        }
        written.push(path);
    }
    Ok(written)
}

/// Applies saved models to every record of the data.
pub fn run_predict(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ds = cfg.load_data()?;
    let methods = cfg.method_list()?;
    let s = cfg.settings(&ds, &methods)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut written = Vec::new();
    for m in methods {
        let path = cfg.out.join("models").join(format!("{m}.json"));
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: {e} (run `fit` first)", path.display())))?;
        let bundle: ModelBundle = serde_json::from_str(&text)?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION || bundle.method != m {
            return Err(Error::Schema(format!("{} is not a {m} model bundle", path.display())));
        }
        let (preds, rejects) = predict_method(&ds, &all, &bundle, &s)?;
        let preds: Vec<_> = preds.into_iter().map(|(i, p)| (i, None, p)).collect();
        let out = cfg.out.join("predictions").join(format!("{m}.jsonl"));
        write_predictions(&out, &ds, &preds)?;
        let rj: Vec<_> = rejects.into_iter().map(|r| (m, None, r)).collect();
        write_rejects(&cfg.out.join("predictions").join(format!("{m}_rejects.csv")), &ds, &rj)?;
        written.push(out);
    }
    Ok(written)
}

/// Out-of-sample predictions of one method over all folds, in case order.
pub fn cross_validate(
    ds: &Dataset,
    method: Method,
    s: &MethodSettings,
    scheme: CvScheme,
) -> Result<(Vec<(usize, Option<usize>, Predictive)>, Vec<(Method, Option<usize>, Reject)>)> {
    let plan = make_cv_plan(ds, scheme)?;
    let mut preds = Vec::new();
    let mut rejects = Vec::new();
    for (k, fold) in plan.folds.iter().enumerate() {
        let targets: Vec<usize> = fold.validation.iter().copied().filter(|&i| ds.observation(i).is_some()).collect();
        if targets.is_empty() {
            continue;
        }
        let bundle = fit_method(ds, &fold.train, method, s, k)?;
        let (p, r) = predict_method(ds, &targets, &bundle, s)?;
        preds.extend(p.into_iter().map(|(i, p)| (i, Some(k), p)));
        rejects.extend(r.into_iter().map(|r| (method, Some(k), r)));
    }
    preds.sort_by_key(|p| p.0);
    rejects.sort_by_key(|r| r.2.index);
    Ok((preds, rejects))
}

/// Cross-validated scoring of every configured method against the raw
/// ensemble.
pub fn run_verify(cfg: &PipelineConfig) -> Result<Vec<ScoreReport>> {
    let ds = cfg.load_data()?;
    let methods = cfg.method_list()?;
    let s = cfg.settings(&ds, &methods)?;
    let vcfg = cfg.verify_config();
    let raw: Vec<Option<f64>> = crate::par::map_range(ds.len(), |i| {
        ds.observation(i).and_then(|y| fair_crps(&ds.records[i].members, y).ok())
    });
    let mut reports = Vec::new();
    let mut hist = Vec::new();
    let mut rocs = Vec::new();
    let mut all_rejects = Vec::new();
    for m in methods {
        log::info!("cross-validating {m}");
        let (preds, rejects) = cross_validate(&ds, m, &s, cfg.cv)?;
        write_predictions(&cfg.out.join("cv_predictions").join(format!("{m}.jsonl")), &ds, &preds)?;
        all_rejects.extend(rejects);
        if preds.is_empty() {
            log::warn!("{m}: no case could be predicted");
            continue;
        }
        let laws: Vec<Predictive> = preds.iter().map(|p| p.2.clone()).collect();
        let obs: Vec<f64> = preds.iter().map(|p| ds.observation(p.0).unwrap_or(0.0)).collect();
        let base: Option<Vec<f64>> = preds.iter().map(|p| raw[p.0]).collect();
        let scored = score_predictions(m.name(), &laws, &obs, base.as_deref(), &vcfg)?;
        write_json(&cfg.out.join("reports").join(format!("{m}.json")), &scored.report)?;
        hist.push((m.name().to_string(), scored.histogram));
        for (t, c) in scored.roc_curves {
            if let Some(c) = c {
                rocs.push((m.name().to_string(), t, c));
            }
        }
        reports.push(scored.report);
    }
    write_rank_histogram_csv(create(&cfg.out.join("rank_histograms.csv"))?, &hist)?;
    write_roc_csv(create(&cfg.out.join("roc.csv"))?, &rocs)?;
    write_rejects(&cfg.out.join("rejects.csv"), &ds, &all_rejects)?;
    write_summary(&cfg.out.join("summary.csv"), &reports, &vcfg.event_thresholds)?;
    Ok(reports)
}

pub fn write_summary(path: &Path, reports: &[ScoreReport], thresholds: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ScoreReport::csv_header(thresholds))?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds `summary.csv` from the saved reports of the configured
/// methods, in config order. Methods without a report are skipped.
pub fn run_report(cfg: &PipelineConfig) -> Result<Vec<ScoreReport>> {
    let mut reports = Vec::new();
    for m in cfg.method_list()? {
        let path = cfg.out.join("reports").join(format!("{m}.json"));
        if !path.exists() {
            log::warn!("no report for {m}; run `verify` first");
            continue;
        }
        reports.push(serde_json::from_str(&fs::read_to_string(&path)?)?);
    }
    if reports.is_empty() {
        return Err(Error::Config(format!(
            "no reports under {}",
            cfg.out.join("reports").display()
        )));
    }
    let thresholds = cfg.verify_config().event_thresholds;
    write_summary(&cfg.out.join("summary.csv"), &reports, &thresholds)?;
    Ok(reports)
}
