use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2×2 contingency table of a binary warning against binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_negatives: u64,
}

impl Contingency {
    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / (self.hits + self.misses) as f64
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.false_alarms as f64 / (self.false_alarms + self.correct_negatives) as f64
    }

    /// Hit rate minus false-alarm rate.
    pub fn peirce(&self) -> f64 {
        self.hit_rate() - self.false_alarm_rate()
    }
}

/// Table for the decision "warn when `p > tau`".
pub fn contingency(probs: &[f64], events: &[bool], tau: f64) -> Contingency {
    let mut c = Contingency {
        hits: 0,
        misses: 0,
        false_alarms: 0,
        correct_negatives: 0,
    };
    for (&p, &e) in probs.iter().zip(events) {
        match (p > tau, e) {
            (true, true) => c.hits += 1,
            (false, true) => c.misses += 1,
            (true, false) => c.false_alarms += 1,
            (false, false) => c.correct_negatives += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Warn when the forecast probability exceeds this; `-1` warns always.
    pub threshold: f64,
    pub false_alarm_rate: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub peirce_max: f64,
    pub peirce_threshold: f64,
}

/// Empirical ROC curve. Thresholds sweep `1`, every distinct forecast
/// probability and `0` in decreasing order, then a final "always warn"
/// point, so the curve runs from `(0,0)` to `(1,1)`. AUC is the trapezoid
/// area under the swept points.
pub fn roc_curve(probs: &[f64], events: &[bool]) -> Result<RocCurve> {
    if probs.len() != events.len() {
        return Err(Error::InvalidParams("probabilities and events differ in length".into()));
    }
    let n_pos = events.iter().filter(|&&e| e).count();
    if n_pos == 0 || n_pos == events.len() {
        return Err(Error::InsufficientData("ROC needs both event and non-event cases".into()));
    }
    let mut taus: Vec<f64> = probs.iter().copied().filter(|p| p.is_finite()).collect();
    taus.extend([0.0, 1.0]);
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    taus.push(-1.0);

    // Sorting once makes the sweep O(n log n).
    let mut cases: Vec<(f64, bool)> = probs.iter().copied().zip(events.iter().copied()).collect();
    cases.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_neg = events.len() - n_pos;
    let (mut hits, mut fas, mut k) = (0usize, 0usize, 0usize);
    let mut points = Vec::with_capacity(taus.len());
    for &tau in &taus {
        while k < cases.len() && cases[k].0 > tau {
            if cases[k].1 {
                hits += 1;
            } else {
                fas += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: tau,
            false_alarm_rate: fas as f64 / n_neg as f64,
            hit_rate: hits as f64 / n_pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].false_alarm_rate - w[0].false_alarm_rate) * 0.5 * (w[0].hit_rate + w[1].hit_rate))
        .sum();
    let (mut peirce_max, mut peirce_threshold) = (f64::NEG_INFINITY, 1.0);
    for p in &points {
        let s = p.hit_rate - p.false_alarm_rate;
        if s > peirce_max {
            peirce_max = s;
            peirce_threshold = p.threshold;
        }
    }
    Ok(RocCurve {
        points,
        auc,
        peirce_max,
        peirce_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_forecasts() {
        let ev = [true, false, true, false, false];
        let p: Vec<f64> = ev.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
        let r = roc_curve(&p, &ev).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.peirce_max, 1.0);
    }

    #[test]
    fn independent_forecasts_auc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let ev: Vec<bool> = (0..10_000).map(|_| rng.random::<f64>() < 0.3).collect();
        let r = roc_curve(&p, &ev).unwrap();
        assert!((0.47..=0.53).contains(&r.auc), "{}", r.auc);
    }

    #[test]
    fn hand_table() {
        // 10 events, 8 warned; 10 non-events, 3 warned
        let mut p = vec![0.9; 8];
        p.extend([0.1; 2]);
        p.extend([0.9; 3]);
        p.extend([0.1; 7]);
        let ev: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let c = contingency(&p, &ev, 0.5);
        assert_abs_diff_eq!(c.hit_rate(), 0.8);
        assert_abs_diff_eq!(c.false_alarm_rate(), 0.3);
        assert_abs_diff_eq!(c.peirce(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_outcomes() {
        assert!(roc_curve(&[0.2, 0.4], &[true, true]).is_err());
        assert!(roc_curve(&[0.2, 0.4], &[false, false]).is_err());
    }

    proptest! {
        #[test]
        fn curve_is_monotone_from_origin_to_one(
            cases in prop::collection::vec((0u8..=10, any::<bool>()), 2..200)
        ) {
            let p: Vec<f64> = cases.iter().map(|c| c.0 as f64 / 10.0).collect();
            let ev: Vec<bool> = cases.iter().map(|c| c.1).collect();
            prop_assume!(ev.iter().any(|&e| e) && ev.iter().any(|&e| !e));
            let r = roc_curve(&p, &ev).unwrap();
            let first = r.points[0];
            let last = *r.points.last().unwrap();
            prop_assert_eq!((first.false_alarm_rate, first.hit_rate), (0.0, 0.0));
            prop_assert_eq!((last.false_alarm_rate, last.hit_rate), (1.0, 1.0));
            for w in r.points.windows(2) {
                prop_assert!(w[1].false_alarm_rate >= w[0].false_alarm_rate);
                prop_assert!(w[1].hit_rate >= w[0].hit_rate);
            }
            prop_assert!((0.0..=1.0).contains(&r.auc));
        }
    }
}
