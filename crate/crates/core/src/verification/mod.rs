//! Scores and reliability diagnostics: fair CRPS, CRPSS, rank/PIT
//! histograms with their summaries and flatness test, ROC curves, and the
//! per-method [`ScoreReport`].
//!
//! All randomization (tie-breaking ranks, randomized PIT) draws from a
//! ChaCha8 stream per case keyed by the report seed, so scores do not
//! depend on thread count.

mod rank;
mod roc;

pub use rank::{
    flatness_test, histogram_stats, pit_value, rank_of_obs, FlatnessTest, HistogramStats, RankHistogram,
    TestComponent,
};
pub use roc::{contingency, roc_curve, Contingency, RocCurve, RocPoint};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::Predictive;

/// Fair CRPS of an exchangeable ensemble:
/// `(1/K)Σ|xᵢ−y| − (1/(2K(K−1)))ΣᵢΣⱼ|xᵢ−xⱼ|`.
pub fn fair_crps(members: &[f64], y: f64) -> Result<f64> {
    let k = members.len();
    if k < 2 {
        return Err(Error::InvalidParams(format!("fair CRPS needs K ≥ 2 members, got {k}")));
    }
    let mut s = members.to_vec();
    s.sort_by(f64::total_cmp);
    let kf = k as f64;
    let first = s.iter().map(|x| (x - y).abs()).sum::<f64>() / kf;
    // ΣᵢΣⱼ|xᵢ − xⱼ| = 2Σᵢ(2i − K + 1)·x₍ᵢ₎ over 0-based sorted ranks
    let pair = 2.0 * s.iter().enumerate().map(|(i, x)| (2.0 * i as f64 - kf + 1.0) * x).sum::<f64>();
    Ok(first - pair / (2.0 * kf * (kf - 1.0)))
}

pub fn crps_of_predictive(pred: &Predictive, y: f64) -> Result<f64> {
    pred.crps(y)
}

/// Skill `1 − a/b` of mean score `a` against baseline `b`.
pub fn crpss(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("CRPSS baseline must be > 0 (got {b})")));
    }
    Ok(1.0 - a / b)
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(values: &[f64], replicates: usize, level: f64, seed: u64) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 || replicates == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..replicates)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    let lo = ((a * replicates as f64).floor() as usize).min(replicates - 1);
    let hi = (((1.0 - a) * replicates as f64).ceil() as usize).clamp(1, replicates) - 1;
    Some((means[lo], means[hi]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Rank histograms use `K + 1` bins.
    pub k: usize,
    /// Event thresholds `s` (mm) for ROC summaries of `{rain > s}`.
    pub event_thresholds: Vec<f64>,
    pub alpha: f64,
    pub bootstrap_replicates: usize,
    pub ci_level: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 35,
            event_thresholds: vec![0.0, 15.0],
            alpha: 0.05,
            bootstrap_replicates: 1000,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub threshold_mm: f64,
    /// `None` when every case falls in one class.
    pub auc: Option<f64>,
    pub peirce_max: Option<f64>,
    pub peirce_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: String,
    pub n_cases: usize,
    pub mean_crps: f64,
    pub crps_ci_low: Option<f64>,
    pub crps_ci_high: Option<f64>,
    pub baseline_crps: Option<f64>,
    pub crpss: Option<f64>,
    pub ez: f64,
    pub vz: f64,
    pub omega: f64,
    pub flatness: FlatnessTest,
    pub roc: Vec<RocSummary>,
}

/// Everything produced by scoring one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub report: ScoreReport,
    pub crps: Vec<f64>,
    pub histogram: RankHistogram,
    pub roc_curves: Vec<(f64, Option<RocCurve>)>,
}

fn case_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64);
    r
}

/// Rank-histogram bin (of `k + 1`) for one case. Ensembles use their
/// observation rank; with `M ≠ K` members the rank is spread uniformly over
/// its `1/(M+1)` slice before binning. Other laws use the randomized PIT.
pub fn histogram_bin<R: Rng + ?Sized>(pred: &Predictive, y: f64, k: usize, rng: &mut R) -> usize {
    match pred {
        Predictive::Ensemble { members } => {
            let r = rank_of_obs(members, y, rng);
            let m = members.len();
            if m == k {
                r - 1
            } else {
                let z = (r as f64 - 1.0 + rng.random::<f64>()) / (m + 1) as f64;
                rank::pit_bin(z, k)
            }
        }
        _ => rank::pit_bin(pit_value(pred, y, rng), k),
    }
}

/// Scores `preds` against `obs`. `baseline` holds per-case baseline scores
/// on the same cases; CRPSS compares the two means.
pub fn score_predictions(
    method: &str,
    preds: &[Predictive],
    obs: &[f64],
    baseline: Option<&[f64]>,
    cfg: &VerifyConfig,
) -> Result<Scored> {
    let n = preds.len();
    if n == 0 || obs.len() != n {
        return Err(Error::InsufficientData(format!(
            "{n} predictions against {} observations",
            obs.len()
        )));
    }
    if cfg.k < 2 {
        return Err(Error::Config("verification K must be ≥ 2".into()));
    }
    let per_case = crate::par::map_range(n, |i| -> Result<(f64, usize)> {
        let c = preds[i].crps(obs[i])?;
        let mut rng = case_rng(cfg.seed, i);
        Ok((c, histogram_bin(&preds[i], obs[i], cfg.k, &mut rng)))
    });
    let per_case: Vec<(f64, usize)> = per_case.into_iter().collect::<Result<_>>()?;
    let crps: Vec<f64> = per_case.iter().map(|p| p.0).collect();
    let mut counts = vec![0u64; cfg.k + 1];
    for p in &per_case {
        counts[p.1] += 1;
    }
    let histogram = RankHistogram::new(counts);
    let stats = histogram_stats(&histogram)?;
    let flatness = flatness_test(&histogram, cfg.alpha)?;
    let mean_crps = crps.iter().sum::<f64>() / n as f64;
    let ci = bootstrap_mean_ci(&crps, cfg.bootstrap_replicates, cfg.ci_level, cfg.seed ^ 0x5eed_b007);
    let baseline_crps = match baseline {
        Some(b) if b.len() == n => Some(b.iter().sum::<f64>() / n as f64),
        Some(b) => {
            return Err(Error::InvalidParams(format!("{} baseline scores for {n} cases", b.len())));
        }
        None => None,
    };
    let crpss_v = baseline_crps.map(|b| crpss(mean_crps, b)).transpose()?;

    let mut roc = Vec::new();
    let mut roc_curves = Vec::new();
    for &s in &cfg.event_thresholds {
        let probs: Vec<f64> = crate::par::map(preds, |p| p.prob_exceed(s));
        let events: Vec<bool> = obs.iter().map(|&y| y > s).collect();
        let curve = roc_curve(&probs, &events).ok();
        roc.push(RocSummary {
            threshold_mm: s,
            auc: curve.as_ref().map(|c| c.auc),
            peirce_max: curve.as_ref().map(|c| c.peirce_max),
            peirce_threshold: curve.as_ref().map(|c| c.peirce_threshold),
        });
        roc_curves.push((s, curve));
    }
    Ok(Scored {
        report: ScoreReport {
            method: method.to_string(),
            n_cases: n,
            mean_crps,
            crps_ci_low: ci.map(|c| c.0),
            crps_ci_high: ci.map(|c| c.1),
            baseline_crps,
            crpss: crpss_v,
            ez: stats.ez,
            vz: stats.vz,
            omega: stats.omega,
            flatness,
            roc,
        },
        crps,
        histogram,
        roc_curves,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ScoreReport {
    /// Flat column names matching [`ScoreReport::csv_row`]. ROC summaries
    /// become `auc_<s>` and `peirce_<s>` per event threshold.
    pub fn csv_header(thresholds: &[f64]) -> Vec<String> {
        let mut h: Vec<String> = [
            "method",
            "n_cases",
            "mean_crps",
            "crps_ci_low",
            "crps_ci_high",
            "baseline_crps",
            "crpss",
            "ez",
            "vz",
            "omega",
            "flatness_slope_p",
            "flatness_convexity_p",
            "flatness_residual_p",
            "flatness_reject",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for s in thresholds {
            h.push(format!("auc_{s}"));
            h.push(format!("peirce_{s}"));
        }
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.method.clone(),
            self.n_cases.to_string(),
            self.mean_crps.to_string(),
            fmt_opt(self.crps_ci_low),
            fmt_opt(self.crps_ci_high),
            fmt_opt(self.baseline_crps),
            fmt_opt(self.crpss),
            self.ez.to_string(),
            self.vz.to_string(),
            self.omega.to_string(),
            self.flatness.slope.p_value.to_string(),
            self.flatness.convexity.p_value.to_string(),
            fmt_opt(self.flatness.residual.map(|c| c.p_value)),
            self.flatness.reject.to_string(),
        ];
        for roc in &self.roc {
            r.push(fmt_opt(roc.auc));
            r.push(fmt_opt(roc.peirce_max));
        }
        r
    }
}

/// Writes `method,bin,count,frequency` rows.
pub fn write_rank_histogram_csv<W: Write>(w: W, rows: &[(String, RankHistogram)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "bin", "count", "frequency"])?;
    for (m, h) in rows {
        for (j, (c, f)) in h.counts.iter().zip(h.frequencies()).enumerate() {
            w.write_record([m.clone(), (j + 1).to_string(), c.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `method,event_threshold_mm,decision_threshold,false_alarm_rate,hit_rate` rows.
pub fn write_roc_csv<W: Write>(w: W, rows: &[(String, f64, RocCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "event_threshold_mm", "decision_threshold", "false_alarm_rate", "hit_rate"])?;
    for (m, s, c) in rows {
        for p in &c.points {
            w.write_record([
                m.clone(),
                s.to_string(),
                p.threshold.to_string(),
                p.false_alarm_rate.to_string(),
                p.hit_rate.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::EgpParams;
    use crate::forests::WeightedEcdf;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fair_crps_hand_cases() {
        assert_eq!(fair_crps(&[0.0, 2.0], 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fair_crps(&[0.0, 1.0, 2.0], 5.0).unwrap(), 10.0 / 3.0, epsilon = 1e-15);
        assert_eq!(fair_crps(&[1.5; 4], 1.5).unwrap(), 0.0);
        assert!(fair_crps(&[1.0], 1.0).is_err());
    }

    #[test]
    fn fair_matches_double_sum() {
        let m = [0.0f64, 0.3, 4.2, 1.1, 0.0, 7.5];
        let y = 2.0;
        let k = m.len() as f64;
        let mut pair = 0.0;
        for a in m {
            for b in m {
                pair += (a - b).abs();
            }
        }
        let direct = m.iter().map(|x| (x - y).abs()).sum::<f64>() / k - pair / (2.0 * k * (k - 1.0));
        assert_abs_diff_eq!(fair_crps(&m, y).unwrap(), direct, epsilon = 1e-13);
    }

    #[test]
    fn equal_weight_ecdf_vs_fair() {
        // kernel(ECDF) − fair = (1/(2K(K−1)) − 1/(2K²))·ΣΣ|xᵢ−xⱼ| = ΣΣ|xᵢ−xⱼ|/(2K²(K−1))
        let m = [0.0f64, 1.0, 3.0, 3.5];
        let k = m.len() as f64;
        let mut pair = 0.0;
        for a in m {
            for b in m {
                pair += (a - b).abs();
            }
        }
        let e = WeightedEcdf::uniform(&m).unwrap();
        for y in [0.0, 2.0, 9.0] {
            let gap = fair_crps(&m, y).unwrap() - e.crps(y);
            assert_abs_diff_eq!(gap, -pair / (2.0 * k * k * (k - 1.0)), epsilon = 1e-13);
        }
    }

    #[test]
    fn crpss_table_values() {
        assert_eq!(crpss(0.4694, 0.4694).unwrap(), 0.0);
        assert_abs_diff_eq!(crpss(0.4212, 0.4694).unwrap(), 0.1027, epsilon = 5e-5);
        assert_abs_diff_eq!(crpss(0.5277, 0.4694).unwrap(), -0.124, epsilon = 5e-4);
        assert!(crpss(1.0, 0.0).is_err());
    }

    #[test]
    fn bootstrap_ci_brackets_mean() {
        let v: Vec<f64> = (0..500).map(|i| (i % 17) as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&v, 1000, 0.95, 3).unwrap();
        let m = v.iter().sum::<f64>() / 500.0;
        assert!(lo < m && m < hi);
        assert_eq!(bootstrap_mean_ci(&v, 1000, 0.95, 3), Some((lo, hi)));
    }

    #[test]
    fn report_crpss_identity_and_determinism() {
        let preds: Vec<Predictive> = (0..200)
            .map(|i| Predictive::Egp {
                params: EgpParams::new(0.3, 1.0, 1.0 + (i % 5) as f64, 0.2).unwrap(),
            })
            .collect();
        let obs: Vec<f64> = (0..200).map(|i| (i % 7) as f64 * 0.8).collect();
        let base = vec![2.0; 200];
        let cfg = VerifyConfig {
            k: 9,
            ..Default::default()
        };
        let a = score_predictions("egp", &preds, &obs, Some(&base), &cfg).unwrap();
        let b = crate::par::sequential(|| score_predictions("egp", &preds, &obs, Some(&base), &cfg).unwrap());
        assert_eq!(a, b);
        let r = &a.report;
        assert_eq!(r.crpss.unwrap(), 1.0 - r.mean_crps / 2.0);
        assert_eq!(a.histogram.n_cases, 200);
        assert_eq!(r.csv_row().len(), ScoreReport::csv_header(&cfg.event_thresholds).len());
    }
}
