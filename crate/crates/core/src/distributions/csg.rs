use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use super::{crps_numeric, Cdf};
use crate::error::{Error, Result};
use crate::special::gamma_cdf;

/// Censored-shifted gamma: a gamma law with shape `kappa` and scale `theta`,
/// shifted left by `delta` and censored at zero, so `π = Γ(δ; κ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsgParams {
    pub pi: f64,
    pub delta: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl CsgParams {
    pub fn new(delta: f64, kappa: f64, theta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite() && kappa > 0.0 && theta > 0.0)
            || !kappa.is_finite()
            || !theta.is_finite()
        {
            return Err(Error::InvalidParams(format!(
                "CSG delta={delta}, kappa={kappa}, theta={theta}"
            )));
        }
        Ok(Self {
            pi: gamma_cdf(delta, kappa, theta),
            delta,
            kappa,
            theta,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.delta, self.kappa, self.theta).map(|_| ())
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            gamma_cdf(y + self.delta, self.kappa, self.theta)
        }
    }

    /// Density of the continuous part, with the gamma normalization `θ^κ`.
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let z = y + self.delta;
        let ln = (self.kappa - 1.0) * z.ln()
            - z / self.theta
            - statrs::function::gamma::ln_gamma(self.kappa)
            - self.kappa * self.theta.ln();
        ln.exp()
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
        let g = Gamma::new(self.kappa, 1.0 / self.theta)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok((g.inverse_cdf(prob) - self.delta).max(0.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        self.quantile(p).unwrap_or(0.0)
    }

    pub fn crps(&self, y: f64) -> Result<f64> {
        crps_numeric(self, y)
    }
}

impl Cdf for CsgParams {
    fn cdf(&self, x: f64) -> f64 {
        CsgParams::cdf(self, x)
    }
}

pub fn csg_cdf(y: f64, p: &CsgParams) -> Result<f64> {
    p.validate()?;
    if y < 0.0 {
        return Err(Error::Domain(format!("rainfall {y} < 0")));
    }
    Ok(p.cdf(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_to_infinity;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn no_shift_no_atom() {
        let p = CsgParams::new(0.0, 2.0, 1.5).unwrap();
        assert_eq!(p.pi, 0.0);
        assert_eq!(p.cdf(0.0), 0.0);
    }

    #[test]
    fn exponential_atom() {
        let p = CsgParams::new(0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.cdf(0.0), 1.0 - (-0.5f64).exp(), max_relative = 1e-14);
        assert_abs_diff_eq!(p.pi, 0.3935, epsilon = 5e-5);
    }

    #[test]
    fn density_integrates_to_continuous_mass() {
        let p = CsgParams::new(0.3, 2.5, 1.2).unwrap();
        let q = integrate_to_infinity(|y| p.pdf(y), 0.0, 1e-12, 0.0, 500).unwrap();
        assert_relative_eq!(q.value, 1.0 - p.pi, max_relative = 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = CsgParams::new(0.4, 0.8, 3.0).unwrap();
        for &y in &[0.01, 0.5, 4.0, 20.0] {
            assert_relative_eq!(p.quantile(p.cdf(y)).unwrap(), y, max_relative = 1e-7);
        }
        assert_eq!(p.quantile(p.pi * 0.5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CsgParams::new(-0.1, 1.0, 1.0).is_err());
        assert!(CsgParams::new(0.1, 0.0, 1.0).is_err());
        assert!(csg_cdf(-1.0, &CsgParams::new(0.1, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn crps_of_exponential_at_zero() {
        // Exp(θ) with y = 0: CRPS = θ/2
        let p = CsgParams::new(0.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(p.crps(0.0).unwrap(), 1.0, epsilon = 1e-8);
    }
}
