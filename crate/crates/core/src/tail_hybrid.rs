//! EGP tail on top of a forest ECDF.
//!
//! The dry probability is the ECDF weight below the trace threshold; the
//! positive part is renormalized and its PWMs fix `(κ, σ, ξ)`. When the fit
//! is impossible the ECDF itself is returned and the prediction is flagged.

use serde::{Deserialize, Serialize};

use crate::distributions::{egp_fit_pwm, pwm_triple_weighted, EgpParams};
use crate::forests::WeightedEcdf;
use crate::predictive::Predictive;

/// Responses below this amount (mm) count as dry.
pub const DRY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPrediction {
    /// Fitted law; `None` when the fallback was used.
    pub egp: Option<EgpParams>,
    pub source_ecdf: WeightedEcdf,
    pub fallback_used: bool,
    /// Weight of dry responses.
    pub pi: f64,
}

impl HybridPrediction {
    pub fn predictive(&self) -> Predictive {
        match self.egp {
            Some(params) if !self.fallback_used => Predictive::Egp { params },
            _ => Predictive::Ecdf {
                ecdf: self.source_ecdf.clone(),
            },
        }
    }
}

pub fn fit_egp_tail(e: &WeightedEcdf) -> HybridPrediction {
    fit_egp_tail_with(e, DRY_THRESHOLD)
}

pub fn fit_egp_tail_with(e: &WeightedEcdf, dry_threshold: f64) -> HybridPrediction {
    let split = e.values().partition_point(|&v| v < dry_threshold);
    let pi = if split == e.len() {
        1.0
    } else {
        e.weights()[..split].iter().sum::<f64>().min(1.0)
    };
    let fallback = || HybridPrediction {
        egp: None,
        source_ecdf: e.clone(),
        fallback_used: true,
        pi,
    };
    let pos_v = &e.values()[split..];
    if pos_v.len() < 3 {
        return fallback();
    }
    let pos_mass: f64 = e.weights()[split..].iter().sum();
    let pos_w: Vec<f64> = e.weights()[split..].iter().map(|w| w / pos_mass).collect();
    let fit = match pwm_triple_weighted(pos_v, &pos_w).and_then(|t| egp_fit_pwm(&t)) {
        Ok(f) => f,
        Err(err) => {
            log::debug!("EGP tail fit failed ({err}); using the forest ECDF");
            return fallback();
        }
    };
    match EgpParams::new(pi, fit.kappa, fit.sigma, fit.xi) {
        Ok(p) => HybridPrediction {
            egp: Some(p),
            source_ecdf: e.clone(),
            fallback_used: false,
            pi,
        },
        Err(_) => fallback(),
    }
}
