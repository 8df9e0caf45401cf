use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{crps_numeric, Cdf};
use crate::error::{Error, Result};
use crate::special::{beta, incomplete_beta};

/// Below this |ξ| the GP limits (exponential) are used.
const XI_SERIES: f64 = 1e-6;

/// Extended generalized Pareto law with an atom at zero:
/// `F(0) = π`, `F(y) = π + (1 − π)·H_ξ(y/σ)^κ` for `y > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgpParams {
    pub pi: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
}

/// Generalized Pareto CDF `H_ξ(x) = 1 − (1 + ξx)^(−1/ξ)` for `x ≥ 0`, `ξ ≥ 0`.
pub fn gp_cdf(x: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if xi.abs() < XI_SERIES {
        -(-x).exp_m1()
    } else {
        -(-(xi * x).ln_1p() / xi).exp_m1()
    }
}

/// GP survival `1 − H_ξ(x)`.
fn gp_survival(x: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if xi.abs() < XI_SERIES {
        (-x).exp()
    } else {
        (-(xi * x).ln_1p() / xi).exp()
    }
}

/// GP quantile: the `x` with `H_ξ(x) = u`.
fn gp_quantile(u: f64, xi: f64) -> f64 {
    let l = -(-u).ln_1p();
    if xi.abs() < XI_SERIES {
        l
    } else {
        (xi * l).exp_m1() / xi
    }
}

impl EgpParams {
    pub fn new(pi: f64, kappa: f64, sigma: f64, xi: f64) -> Result<Self> {
        let p = Self {
            pi,
            kappa,
            sigma,
            xi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.pi)
            && self.kappa > 0.0
            && self.kappa.is_finite()
            && self.sigma > 0.0
            && self.sigma.is_finite()
            && (0.0..1.0).contains(&self.xi);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("EGP {self:?}")))
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else if y == 0.0 {
            self.pi
        } else {
            self.pi + (1.0 - self.pi) * gp_cdf(y / self.sigma, self.xi).powf(self.kappa)
        }
    }

    /// Density of the continuous part (includes the `1 − π` factor).
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let x = y / self.sigma;
        let h = gp_cdf(x, self.xi);
        let dens = if self.xi.abs() < XI_SERIES {
            (-x).exp()
        } else {
            (1.0 + self.xi * x).powf(-1.0 / self.xi - 1.0)
        };
        (1.0 - self.pi) * self.kappa / self.sigma * h.powf(self.kappa - 1.0) * dens
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0,1]")));
        }
        if prob >= 1.0 {
            return Err(Error::UnboundedQuantile);
        }
        if prob <= self.pi {
            return Ok(0.0);
        }
        let u = ((prob - self.pi) / (1.0 - self.pi)).powf(1.0 / self.kappa);
        if u >= 1.0 {
            return Err(Error::UnboundedQuantile);
        }
        Ok(self.sigma * gp_quantile(u, self.xi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let p: f64 = rng.random();
            if let Ok(v) = self.quantile(p) {
                return v;
            }
        }
    }

    /// CRPS against `y`, closed form when `0 < ξ < 1`, quadrature otherwise.
    pub fn crps(&self, y: f64) -> f64 {
        match egp_crps(self, y) {
            Ok(v) => v,
            Err(_) => crps_numeric(self, y).unwrap_or(f64::NAN),
        }
    }

    /// Mean of the law, finite for `ξ < 1`.
    pub fn mean(&self) -> f64 {
        let b = beta(self.kappa, 1.0 - self.xi);
        let m = if self.xi.abs() < XI_SERIES {
            // ξ → 0 limit of σ(κB(κ,1−ξ) − 1)/ξ
            let psi = |z: f64| statrs::function::gamma::digamma(z);
            self.sigma * (psi(self.kappa + 1.0) - psi(1.0))
        } else {
            self.sigma * (self.kappa * b - 1.0) / self.xi
        };
        (1.0 - self.pi) * m
    }
}

impl Cdf for EgpParams {
    fn cdf(&self, x: f64) -> f64 {
        EgpParams::cdf(self, x)
    }
}

pub fn egp_cdf(y: f64, p: &EgpParams) -> Result<f64> {
    p.validate()?;
    if y < 0.0 {
        return Err(Error::Domain(format!("rainfall {y} < 0")));
    }
    Ok(p.cdf(y))
}

pub fn egp_quantile(prob: f64, p: &EgpParams) -> Result<f64> {
    p.validate()?;
    p.quantile(prob)
}

/// Closed-form CRPS of the EGP law for `0 < ξ < 1`:
///
/// ```text
/// CRPS = y(2F(y) − 1) + (σ/ξ)(2F(y) − π² − 1)
///      + (2κσ(1 − π)/ξ)·[B(z; 1−ξ, κ) − (1−π)B(1−ξ, 2κ) − πB(1−ξ, κ)]
/// ```
///
/// with `z = (1 + ξy/σ)^(−1/ξ)`, obtained from `E|X − y| − ½E|X − X'|`.
pub fn egp_crps(p: &EgpParams, y: f64) -> Result<f64> {
    p.validate()?;
    if !(p.xi > 0.0 && p.xi < 1.0) {
        return Err(Error::Unsupported(format!(
            "EGP closed-form CRPS needs 0 < ξ < 1 (ξ = {})",
            p.xi
        )));
    }
    if y < 0.0 {
        return Err(Error::Domain(format!("rainfall {y} < 0")));
    }
    let EgpParams {
        pi,
        kappa,
        sigma,
        xi,
    } = *p;
    let fy = p.cdf(y);
    let z = gp_survival(y / sigma, xi);
    let a = 1.0 - xi;
    let bz = incomplete_beta(z, a, kappa)?;
    let b1 = beta(a, kappa);
    let b2 = beta(a, 2.0 * kappa);
    let s = sigma / xi;
    Ok(y * (2.0 * fy - 1.0)
        + s * (2.0 * fy - pi * pi - 1.0)
        + 2.0 * kappa * s * (1.0 - pi) * (bz - (1.0 - pi) * b2 - pi * b1))
}
