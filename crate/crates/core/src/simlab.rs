//! Synthetic scenarios with known conditional truth, and a Monte Carlo CRPS
//! oracle.
//!
//! Generative model, per station `s` and day `t`:
//!
//! ```text
//! z[s,t] = φ·z[s,t−1] + √(1−φ²)·ε₁      wetness
//! w[s,t] = φ·w[s,t−1] + √(1−φ²)·ε₂      intensity
//! π      = 1 / (1 + exp(dry_logit + 1.5·z))
//! σ      = σ₀ · c_s · exp(0.35·w),   c_s = exp(0.2·((s mod 3) − 1))
//! κ      = 0.8 + 0.4 / (1 + exp(−w))
//! Y      ~ EGP(π, κ, σ, ξ)
//! ```
//!
//! Raw members (and HRES) are `F⁻¹(½ + d·(U − ½))` with `U` uniform and `F`
//! the true law; wet values get `+bias`. With `d = 1` and `bias = 0` the
//! ensemble is an exchangeable draw from the truth. Auxiliary fields are
//! noisy functions of `(z, w)`, plus two pure-noise fields.

use std::io::Write;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{format_time, parse_time, Dataset, ForecastRecord};
use crate::distributions::EgpParams;
use crate::error::{Error, Result};

pub const SIM_AUX: [&str; 8] = ["HU1500", "CAPE", "TCC", "UX", "VX", "TPW850_q10", "TPW850_q50", "TPW850_q90"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_stations: usize,
    pub n_days: usize,
    pub k_members: usize,
    pub xi: f64,
    /// Added to wet raw members and HRES, in mm.
    pub bias: f64,
    /// Quantile-space spread factor of the raw members.
    pub dispersion: f64,
    pub phi: f64,
    pub sigma0: f64,
    pub dry_logit: f64,
    pub start: String,
    pub lead_time: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_stations: 4,
            n_days: 500,
            k_members: 35,
            xi: 0.2,
            bias: 0.0,
            dispersion: 1.0,
            phi: 0.6,
            sigma0: 1.5,
            dry_logit: 0.0,
            start: "2015-01-01T18:00:00Z".into(),
            lead_time: 51.0,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    /// Biased (+1 mm) and underdispersed (×0.5) raw ensemble.
    pub fn standard(n_stations: usize, n_days: usize, seed: u64) -> Self {
        Self {
            n_stations,
            n_days,
            bias: 1.0,
            dispersion: 0.5,
            seed,
            ..Self::default()
        }
    }

    /// As [`standard`](Self::standard) with a heavier tail, `ξ = 0.3`.
    pub fn heavy(n_stations: usize, n_days: usize, seed: u64) -> Self {
        Self {
            xi: 0.3,
            ..Self::standard(n_stations, n_days, seed)
        }
    }

    pub fn n_cases(&self) -> usize {
        self.n_stations * self.n_days
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0 && self.dispersion <= 1.0) {
            return Err(Error::Config(format!("dispersion {} outside (0,1]", self.dispersion)));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return Err(Error::Config(format!("ξ = {} outside [0,1)", self.xi)));
        }
        if !(self.phi.abs() < 1.0) || !(self.sigma0 > 0.0) || !self.bias.is_finite() {
            return Err(Error::Config("need |φ| < 1, σ₀ > 0 and a finite bias".into()));
        }
        if self.n_stations == 0 || self.n_days == 0 || self.k_members < 2 {
            return Err(Error::Config("need ≥ 1 station, ≥ 1 day and ≥ 2 members".into()));
        }
        self.start_time().map(|_| ())
    }

    fn start_time(&self) -> Result<DateTime<Utc>> {
        parse_time(&self.start).ok_or_else(|| Error::Config(format!("bad start time `{}`", self.start)))
    }
}

/// A simulated dataset with the true conditional law of every case.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dataset: Dataset,
    pub truth: Vec<EgpParams>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Draws a scenario. Same spec, same bits.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let start = spec.start_time()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innov = (1.0 - spec.phi * spec.phi).sqrt();
    let mut records = Vec::with_capacity(spec.n_cases());
    let mut observations = Vec::with_capacity(spec.n_cases());
    let mut truth = Vec::with_capacity(spec.n_cases());
    let corrupt = |law: &EgpParams, u: f64| {
        let v = law.quantile(0.5 + spec.dispersion * (u - 0.5)).unwrap_or(0.0);
        if v > 0.0 {
            v + spec.bias
        } else {
            v
        }
    };
    for s in 0..spec.n_stations {
        let c_s = (0.2 * ((s % 3) as f64 - 1.0)).exp();
        let (mut z, mut w) = (normal(&mut rng), normal(&mut rng));
        for t in 0..spec.n_days {
            if t > 0 {
                z = spec.phi * z + innov * normal(&mut rng);
                w = spec.phi * w + innov * normal(&mut rng);
            }
            let law = EgpParams::new(
                1.0 / (1.0 + (spec.dry_logit + 1.5 * z).exp()),
                0.8 + 0.4 * logistic(w),
                spec.sigma0 * c_s * (0.35 * w).exp(),
                spec.xi,
            )?;
            let y = law.sample(&mut rng);
            let members: Vec<f64> = (0..spec.k_members).map(|_| corrupt(&law, rng.random())).collect();
            let hres = corrupt(&law, rng.random());
            let tpw = 20.0 + 5.0 * z + 3.0 * w + normal(&mut rng);
            let aux = [
                60.0 + 20.0 * z.tanh() + 5.0 * normal(&mut rng),
                300.0 * (0.8 * w + 0.3 * normal(&mut rng)).exp(),
                100.0 * logistic(1.2 * z + 0.5 * normal(&mut rng)),
                5.0 * normal(&mut rng),
                5.0 * normal(&mut rng),
                tpw - 3.0,
                tpw,
                tpw + 3.0,
            ];
            let mut aux_map: std::collections::BTreeMap<String, f64> =
                SIM_AUX.iter().map(|n| n.to_string()).zip(aux).collect();
            aux_map.insert("HRES".into(), hres);
            records.push(ForecastRecord {
                station_id: format!("S{:03}", s + 1),
                valid_time: start + Duration::days(t as i64),
                lead_time: spec.lead_time,
                members,
                aux: aux_map,
            });
            observations.push(Some(y));
            truth.push(law);
        }
    }
    let mut aux_names = vec!["HRES".to_string()];
    aux_names.extend(SIM_AUX.iter().map(|s| s.to_string()));
    Ok(Scenario {
        dataset: Dataset::new(records, observations, aux_names)?,
        truth,
    })
}

/// Sidecar with the true law of every case, keyed like the dataset.
pub fn write_truth_csv<W: Write>(w: W, sc: &Scenario) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["station_id", "valid_time", "pi", "kappa", "sigma", "xi"])?;
    for (r, p) in sc.dataset.records.iter().zip(&sc.truth) {
        wtr.write_record([
            r.station_id.clone(),
            format_time(&r.valid_time),
            p.pi.to_string(),
            p.kappa.to_string(),
            p.sigma.to_string(),
            p.xi.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a truth sidecar into `(station_id, valid_time) → law`.
pub fn read_truth_csv<R: std::io::Read>(r: R) -> Result<std::collections::BTreeMap<(String, DateTime<Utc>), EgpParams>> {
    #[derive(Deserialize)]
    struct Row {
        station_id: String,
        valid_time: String,
        pi: f64,
        kappa: f64,
        sigma: f64,
        xi: f64,
    }
    let mut out = std::collections::BTreeMap::new();
    for (k, row) in csv::Reader::from_reader(r).deserialize::<Row>().enumerate() {
        let row = row?;
        let t = parse_time(&row.valid_time).ok_or_else(|| Error::MalformedRow {
            line: k + 2,
            msg: format!("bad valid_time `{}`", row.valid_time),
        })?;
        out.insert((row.station_id, t), EgpParams::new(row.pi, row.kappa, row.sigma, row.xi)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Kernel-form Monte Carlo CRPS `E|X − y| − ½E|X − X′|` from `n_draws`
/// independent pairs.
pub fn mc_crps<F: FnMut(&mut ChaCha8Rng) -> f64>(mut sampler: F, y: f64, n_draws: usize, seed: u64) -> Result<McEstimate> {
    if n_draws < 100 {
        return Err(Error::InvalidParams(format!("n_draws = {n_draws} < 100")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<f64> = (0..n_draws)
        .map(|_| {
            let a = sampler(&mut rng);
            let b = sampler(&mut rng);
            (a - y).abs() - 0.5 * (a - b).abs()
        })
        .collect();
    let n = n_draws as f64;
    let m = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        estimate: m,
        std_error: (var / n).sqrt(),
    })
}
