//! Parametric rainfall laws on `[0, ∞)` with an atom at zero, the quadrature
//! CRPS evaluator and probability weighted moment (PWM) machinery.
//!
//! All three families share the convention `F(0⁻) = 0` and `F(0) = π`.

mod cgev;
mod csg;
mod egp;
mod pwm;

pub use cgev::{cgev_cdf, gev_cdf, CgevParams};
pub use csg::{csg_cdf, CsgParams};
pub use egp::{egp_cdf, egp_crps, egp_quantile, gp_cdf, EgpParams};
pub use pwm::{
    egp_fit_pwm, egp_pwm, pwm_triple_weighted, pwm_weighted, EgpPwmFit, PwmTriple, XI_MAX_FIT,
    XI_MIN_FIT,
};

use crate::error::Result;
use crate::quadrature::{integrate, integrate_to_infinity};

/// Absolute tolerance of [`crps_numeric`].
pub const CRPS_QUAD_TOL: f64 = 1e-8;

const MAX_INTERVALS: usize = 2000;

/// A distribution function on the real line, usable by [`crps_numeric`].
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    /// Points where the CDF jumps or kinks, so quadrature can split there.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// CRPS by adaptive quadrature of `∫ (F(x) − 1{x ≥ y})² dx` with absolute
/// tolerance [`CRPS_QUAD_TOL`].
pub fn crps_numeric<D: Cdf + ?Sized>(dist: &D, y: f64) -> Result<f64> {
    crps_numeric_tol(dist, y, CRPS_QUAD_TOL)
}

pub fn crps_numeric_tol<D: Cdf + ?Sized>(dist: &D, y: f64, tol: f64) -> Result<f64> {
    // Integration below min(0, y) contributes nothing for laws on [0, ∞).
    let mut pts = vec![0.0f64.min(y), 0.0, y];
    pts.extend(dist.breakpoints().into_iter().filter(|b| b.is_finite() && *b > 0.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let n_seg = pts.len();
    let seg_tol = tol / n_seg as f64;
    let integrand = |x: f64| {
        let ind = if x >= y { 1.0 } else { 0.0 };
        let d = dist.cdf(x) - ind;
        d * d
    };
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(integrand, w[0], w[1], seg_tol, 0.0, MAX_INTERVALS)?.value;
    }
    let last = *pts.last().unwrap_or(&0.0);
    total += integrate_to_infinity(integrand, last, seg_tol, 0.0, MAX_INTERVALS)?.value;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Step(f64);
    impl Cdf for Step {
        fn cdf(&self, x: f64) -> f64 {
            if x >= self.0 {
                1.0
            } else {
                0.0
            }
        }
        fn breakpoints(&self) -> Vec<f64> {
            vec![self.0]
        }
    }

    #[test]
    fn point_mass_at_observation_is_zero() {
        assert_abs_diff_eq!(crps_numeric(&Step(2.0), 2.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_elsewhere_is_distance() {
        assert_abs_diff_eq!(crps_numeric(&Step(2.0), 0.5).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn uniform_at_zero() {
        let u = |x: f64| x.clamp(0.0, 1.0);
        assert_abs_diff_eq!(crps_numeric(&u, 0.0).unwrap(), 1.0 / 3.0, epsilon = 1e-9);
    }
}
