use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{crps_numeric, Cdf};
use crate::error::{Error, Result};

const XI_SERIES: f64 = 1e-6;

/// GEV CDF `G(y; μ, σ, ξ)`, Gumbel for `ξ = 0`.
pub fn gev_cdf(y: f64, mu: f64, sigma: f64, xi: f64) -> f64 {
    let s = (y - mu) / sigma;
    if xi.abs() < XI_SERIES {
        return (-(-s).exp()).exp();
    }
    let t = 1.0 + xi * s;
    if t <= 0.0 {
        return if xi > 0.0 { 0.0 } else { 1.0 };
    }
    (-t.powf(-1.0 / xi)).exp()
}

/// Censored GEV: `F(y) = G(y; μ, σ, ξ)` for `y ≥ 0`, atom `π = G(0)` at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgevParams {
    pub pi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl CgevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma > 0.0 && sigma.is_finite() && xi < 1.0 && xi.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "CGEV mu={mu}, sigma={sigma}, xi={xi}"
            )));
        }
        Ok(Self {
            pi: gev_cdf(0.0, mu, sigma, xi),
            mu,
            sigma,
            xi,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.mu, self.sigma, self.xi).map(|_| ())
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            gev_cdf(y, self.mu, self.sigma, self.xi)
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0,1]")));
        }
        if prob <= self.pi {
            return Ok(0.0);
        }
        if prob >= 1.0 {
            if self.xi < 0.0 {
                return Ok((self.mu - self.sigma / self.xi).max(0.0));
            }
            return Err(Error::UnboundedQuantile);
        }
        let l = -prob.ln();
        let q = if self.xi.abs() < XI_SERIES {
            self.mu - self.sigma * l.ln()
        } else {
            self.mu + self.sigma * (l.powf(-self.xi) - 1.0) / self.xi
        };
        Ok(q.max(0.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        self.quantile(p).unwrap_or(0.0)
    }

    pub fn crps(&self, y: f64) -> Result<f64> {
        crps_numeric(self, y)
    }
}

impl Cdf for CgevParams {
    fn cdf(&self, x: f64) -> f64 {
        CgevParams::cdf(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        if self.xi < 0.0 {
            vec![self.mu - self.sigma / self.xi]
        } else {
            Vec::new()
        }
    }
}

pub fn cgev_cdf(y: f64, p: &CgevParams) -> Result<f64> {
    p.validate()?;
    if y < 0.0 {
        return Err(Error::Domain(format!("rainfall {y} < 0")));
    }
    Ok(p.cdf(y))
}
