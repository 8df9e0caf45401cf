//! The predictive distribution produced by every calibration method.

use serde::{Deserialize, Serialize};

use crate::distributions::{CgevParams, CsgParams, EgpParams};
use crate::error::{Error, Result};
use crate::forests::WeightedEcdf;
use crate::verification::fair_crps;

/// Serialized with a `family` tag: parametric laws carry `params`, forest
/// output carries the ECDF arrays, ensembles carry their members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Predictive {
    Egp { params: EgpParams },
    Csg { params: CsgParams },
    Cgev { params: CgevParams },
    Ecdf { ecdf: WeightedEcdf },
    /// Exchangeable members (raw or analog ensembles), scored with the fair
    /// CRPS.
    Ensemble { members: Vec<f64> },
}

impl Predictive {
    pub fn ensemble(members: Vec<f64>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidParams("ensemble needs at least 2 members".into()));
        }
        Ok(Self::Ensemble { members })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Egp { .. } => "egp",
            Self::Csg { .. } => "csg",
            Self::Cgev { .. } => "cgev",
            Self::Ecdf { .. } => "ecdf",
            Self::Ensemble { .. } => "ensemble",
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Self::Egp { params } => params.cdf(y),
            Self::Csg { params } => params.cdf(y),
            Self::Cgev { params } => params.cdf(y),
            Self::Ecdf { ecdf } => ecdf.cdf(y),
            Self::Ensemble { members } => {
                members.iter().filter(|&&m| m <= y).count() as f64 / members.len() as f64
            }
        }
    }

    /// `F(y⁻)`. Parametric laws jump only at zero.
    pub fn cdf_left(&self, y: f64) -> f64 {
        match self {
            Self::Ecdf { ecdf } => ecdf.cdf_left(y),
            Self::Ensemble { members } => {
                members.iter().filter(|&&m| m < y).count() as f64 / members.len() as f64
            }
            _ if y <= 0.0 => 0.0,
            _ => self.cdf(y),
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        match self {
            Self::Egp { params } => params.quantile(prob),
            Self::Csg { params } => params.quantile(prob),
            Self::Cgev { params } => params.quantile(prob),
            Self::Ecdf { ecdf } => Ok(ecdf.quantile(prob)),
            Self::Ensemble { members } => Ok(WeightedEcdf::uniform(members)?.quantile(prob)),
        }
    }

    /// CRPS against `y`: closed form for EGP, quadrature for CSG/CGEV, the
    /// weighted kernel form for ECDFs and the fair estimator for ensembles.
    pub fn crps(&self, y: f64) -> Result<f64> {
        match self {
            Self::Egp { params } => Ok(params.crps(y)),
            Self::Csg { params } => params.crps(y),
            Self::Cgev { params } => params.crps(y),
            Self::Ecdf { ecdf } => Ok(ecdf.crps(y)),
            Self::Ensemble { members } => fair_crps(members, y),
        }
    }

    /// `P(Y > s) = 1 − F(s)`.
    pub fn prob_exceed(&self, s: f64) -> f64 {
        1.0 - self.cdf(s)
    }
}
