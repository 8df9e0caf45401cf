//! Probability weighted moments `μ_r = E[Y·F̄(Y)^r] = ∫₀¹ F⁻¹(q)(1 − q)^r dq`
//! and the EGP inversion from `(μ₀, μ₁, μ₂)` to `(κ, σ, ξ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_beta;

/// Search box for the inversion.
pub const KAPPA_MIN_FIT: f64 = 1e-3;
pub const KAPPA_MAX_FIT: f64 = 1e3;
pub const XI_MIN_FIT: f64 = 1e-6;
pub const XI_MAX_FIT: f64 = 0.99;

const WEIGHT_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwmTriple {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl PwmTriple {
    /// Monotone-weight inequalities of a nonnegative variable:
    /// `μ₀ ≥ 2μ₁ ≥ 0` and `μ₁ ≥ 1.5μ₂`.
    pub fn check(&self) -> Result<()> {
        let tol = 1e-12 * self.mu0.abs().max(1e-300);
        let ok = self.mu0.is_finite()
            && self.mu1.is_finite()
            && self.mu2.is_finite()
            && self.mu2 >= -tol
            && self.mu0 + tol >= 2.0 * self.mu1
            && self.mu1 >= -tol
            && self.mu1 + tol >= 1.5 * self.mu2;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("PWM triple violates ordering: {self:?}")))
        }
    }
}

/// Exact PWM of a weighted step-function ECDF. With cumulative weights
/// `W_i`, `μ_r = Σ v_i·[(1 − W_{i−1})^{r+1} − (1 − W_i)^{r+1}] / (r + 1)`.
pub fn pwm_weighted(values: &[f64], weights: &[f64], r: u32) -> Result<f64> {
    check_weighted(values, weights)?;
    Ok(pwm_unchecked(values, weights, r))
}

/// All three PWMs in one pass over the sample.
pub fn pwm_triple_weighted(values: &[f64], weights: &[f64]) -> Result<PwmTriple> {
    check_weighted(values, weights)?;
    Ok(PwmTriple {
        mu0: pwm_unchecked(values, weights, 0),
        mu1: pwm_unchecked(values, weights, 1),
        mu2: pwm_unchecked(values, weights, 2),
    })
}

fn check_weighted(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::Domain(format!(
            "PWM needs matching non-empty values/weights ({} vs {})",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain("negative PWM weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Domain(format!("PWM weights sum to {total}, not 1")));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("PWM values must be sorted ascending".into()));
    }
    Ok(())
}

fn pwm_unchecked(values: &[f64], weights: &[f64], r: u32) -> f64 {
    let p = r as i32 + 1;
    let mut cum = 0.0f64;
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        let before = (1.0 - cum).max(0.0).powi(p);
        cum += w;
        let after = (1.0 - cum).max(0.0).powi(p);
        acc += v * (before - after);
    }
    acc / p as f64
}

/// Beta terms `B(jκ, 1 − ξ)`, `j = 1, 2, 3`.
fn betas(kappa: f64, xi: f64) -> [f64; 3] {
    let a = 1.0 - xi;
    [
        ln_beta(kappa, a).exp(),
        ln_beta(2.0 * kappa, a).exp(),
        ln_beta(3.0 * kappa, a).exp(),
    ]
}

/// The right-hand sides `(ξ/σ)μ_r` of the EGP PWM system.
fn scaled_moments(kappa: f64, xi: f64) -> [f64; 3] {
    let [b1, b2, b3] = betas(kappa, xi);
    [
        kappa * b1 - 1.0,
        kappa * (b1 - b2) - 0.5,
        kappa * (b1 - 2.0 * b2 + b3) - 1.0 / 3.0,
    ]
}

/// Analytic PWMs of the (π = 0) EGP law.
pub fn egp_pwm(kappa: f64, sigma: f64, xi: f64) -> PwmTriple {
    let [m0, m1, m2] = scaled_moments(kappa, xi);
    let s = sigma / xi;
    PwmTriple {
        mu0: s * m0,
        mu1: s * m1,
        mu2: s * m2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgpPwmFit {
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
}

fn ratio_residual(u: [f64; 2], target: [f64; 2]) -> [f64; 2] {
    let kappa = u[0].exp();
    let [m0, m1, m2] = scaled_moments(kappa, u[1]);
    [m1 / m0 - target[0], m2 / m0 - target[1]]
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

fn clamp_box(u: [f64; 2]) -> [f64; 2] {
    [
        u[0].clamp(KAPPA_MIN_FIT.ln(), KAPPA_MAX_FIT.ln()),
        u[1].clamp(XI_MIN_FIT, XI_MAX_FIT),
    ]
}

// Damped Newton in (ln κ, ξ) with a forward-difference Jacobian.
fn newton(mut u: [f64; 2], target: [f64; 2]) -> ([f64; 2], f64) {
    let mut r = ratio_residual(u, target);
    let mut rn = norm(r);
    for _ in 0..100 {
        if rn < 1e-14 {
            break;
        }
        let h = [1e-7 * u[0].abs().max(1.0), 1e-7 * u[1].abs().max(1e-3)];
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = u;
            up[k] += h[k];
            if up[1] > XI_MAX_FIT + 0.005 {
                up[k] -= 2.0 * h[k];
            }
            let rp = ratio_residual(up, target);
            let dh = up[k] - u[k];
            jac[0][k] = (rp[0] - r[0]) / dh;
            jac[1][k] = (rp[1] - r[1]) / dh;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det == 0.0 {
            break;
        }
        let step = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand = clamp_box([u[0] - lambda * step[0], u[1] - lambda * step[1]]);
            let rc = ratio_residual(cand, target);
            let rcn = norm(rc);
            if rcn.is_finite() && rcn < rn {
                u = cand;
                r = rc;
                rn = rcn;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (u, rn)
}

/// Solves the EGP PWM system for `(κ, σ, ξ)`: a 2-D root search in
/// `(ln κ, ξ)` on the ratios `μ₁/μ₀`, `μ₂/μ₀`, then `σ = ξμ₀ / (κB(κ,1−ξ) − 1)`.
pub fn egp_fit_pwm(t: &PwmTriple) -> Result<EgpPwmFit> {
    t.check()?;
    if !(t.mu0 > 0.0) || t.mu0 - 2.0 * t.mu1 <= 1e-12 * t.mu0 {
        return Err(Error::PwmInfeasible(format!("zero-spread moments {t:?}")));
    }
    let target = [t.mu1 / t.mu0, t.mu2 / t.mu0];

    let mut starts: Vec<([f64; 2], f64)> = Vec::with_capacity(500);
    let (lk0, lk1) = (KAPPA_MIN_FIT.ln(), KAPPA_MAX_FIT.ln());
    for i in 0..25 {
        let lk = lk0 + (lk1 - lk0) * i as f64 / 24.0;
        for j in 0..20 {
            let xi = XI_MIN_FIT + (XI_MAX_FIT - XI_MIN_FIT) * j as f64 / 19.0;
            let u = [lk, xi];
            let rn = norm(ratio_residual(u, target));
            if rn.is_finite() {
                starts.push((u, rn));
            }
        }
    }
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut best: Option<([f64; 2], f64)> = None;
    for &(u0, _) in starts.iter().take(6) {
        let (u, rn) = newton(u0, target);
        if best.is_none_or(|b| rn < b.1) {
            best = Some((u, rn));
        }
        if rn < 1e-12 {
            break;
        }
    }
    let (u, _) = best.ok_or_else(|| Error::PwmInfeasible("no finite start".into()))?;
    let kappa = u[0].exp();
    let xi = u[1];
    let [m0, m1, m2] = scaled_moments(kappa, xi);
    if !(m0 > 0.0) {
        return Err(Error::PwmInfeasible(format!("non-positive scale at κ={kappa}, ξ={xi}")));
    }
    let sigma = xi * t.mu0 / m0;
    let rel = |fit: f64, obs: f64| (fit - obs).abs() / obs.abs().max(1e-300);
    let s = sigma / xi;
    let residual = rel(s * m0, t.mu0).max(rel(s * m1, t.mu1)).max(rel(s * m2, t.mu2));
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::PwmInfeasible(format!(
            "no root in κ∈({KAPPA_MIN_FIT},{KAPPA_MAX_FIT}), ξ∈({XI_MIN_FIT},{XI_MAX_FIT}); \
             best relative residual {residual:.3e} at κ={kappa:.4}, ξ={xi:.4}"
        )));
    }
    Ok(EgpPwmFit { kappa, sigma, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::EgpParams;
    use crate::quadrature::integrate;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Oracle: μ_r by quadrature of the quantile function, with
    // q = 1 − (1 − t)⁴ absorbing the singularity at q = 1.
    fn pwm_by_quadrature(p: &EgpParams, r: i32) -> f64 {
        integrate(
            |t: f64| {
                let s = 1.0 - t;
                // 1 − q^(1/κ) evaluated without forming q
                let one_minus_u = -((-s.powi(4)).ln_1p() / p.kappa).exp_m1();
                let x = p.sigma * (one_minus_u.powf(-p.xi) - 1.0) / p.xi;
                x * s.powi(4 * r) * 4.0 * s.powi(3)
            },
            0.0,
            1.0,
            1e-11,
            1e-11,
            4000,
        )
        .unwrap()
        .value
    }

    #[test]
    fn single_value() {
        for r in 0..3 {
            assert_relative_eq!(pwm_weighted(&[3.0], &[1.0], r).unwrap(), 3.0 / (r as f64 + 1.0));
        }
    }

    #[test]
    fn two_point_hand_integral() {
        assert_relative_eq!(pwm_weighted(&[0.0, 2.0], &[0.5, 0.5], 0).unwrap(), 1.0);
    }

    #[test]
    fn weight_validation() {
        assert!(pwm_weighted(&[0.0, 2.0], &[0.5, 0.6], 0).is_err());
        assert!(pwm_weighted(&[2.0, 0.0], &[0.5, 0.5], 0).is_err());
        assert!(pwm_weighted(&[0.0, 2.0], &[1.5, -0.5], 0).is_err());
    }

    #[test]
    fn forward_equations_match_quadrature() {
        for &(k, s, xi) in &[(1.0, 1.0, 0.2), (0.5, 5.0, 0.5), (2.0, 0.5, 0.05)] {
            let p = EgpParams::new(0.0, k, s, xi).unwrap();
            let t = egp_pwm(k, s, xi);
            assert_relative_eq!(t.mu0, pwm_by_quadrature(&p, 0), max_relative = 1e-8);
            assert_relative_eq!(t.mu1, pwm_by_quadrature(&p, 1), max_relative = 1e-8);
            assert_relative_eq!(t.mu2, pwm_by_quadrature(&p, 2), max_relative = 1e-8);
        }
    }

    #[test]
    fn gp_sample_mean_converges() {
        let p = EgpParams::new(0.0, 1.0, 1.0, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v: Vec<f64> = (0..200_000).map(|_| p.sample(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        let w = vec![1.0 / v.len() as f64; v.len()];
        assert_abs_diff_eq!(pwm_weighted(&v, &w, 0).unwrap(), 1.25, epsilon = 0.02);
    }

    #[test]
    fn recovers_reference_point() {
        let fit = egp_fit_pwm(&egp_pwm(1.0, 1.0, 0.2)).unwrap();
        assert_relative_eq!(fit.kappa, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.sigma, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.xi, 0.2, max_relative = 1e-6);
    }

    #[test]
    fn roundtrip_grid() {
        for &k in &[0.5, 1.0, 2.0] {
            for &s in &[0.5, 1.0, 5.0] {
                for &xi in &[0.05, 0.2, 0.5] {
                    let fit = egp_fit_pwm(&egp_pwm(k, s, xi)).unwrap();
                    assert_relative_eq!(fit.kappa, k, max_relative = 1e-6);
                    assert_relative_eq!(fit.sigma, s, max_relative = 1e-6);
                    assert_relative_eq!(fit.xi, xi, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn point_mass_is_infeasible() {
        let t = PwmTriple {
            mu0: 2.0,
            mu1: 1.0,
            mu2: 2.0 / 3.0,
        };
        assert!(matches!(egp_fit_pwm(&t), Err(Error::PwmInfeasible(_))));
    }

    #[test]
    fn weighted_pwm_satisfies_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            v.sort_by(f64::total_cmp);
            let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            pwm_triple_weighted(&v, &w).unwrap().check().unwrap();
        }
    }
}
