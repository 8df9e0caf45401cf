//! EMOS: affine links from ensemble covariates to the parameters of a
//! censored rainfall law, fitted by minimizing the mean CRPS.
//!
//! Covariates, in order: HRES, CTRL, MEAN, PR0 (the classical set) and MAD.
//! Coefficient layouts:
//!
//! * CSG `[m₀, m_hres, m_ctrl, m_mean, m_pr0, v₀, v_mean, δ]`: gamma mean
//!   `μ` affine in the classical set, variance affine in MEAN, then
//!   `κ = μ²/var`, `θ = var/μ`; `δ` is clamped at 0.
//! * CGEV `[l₀, l_hres, l_ctrl, l_mean, l_pr0, s₀, s_mad, ξ]`: location
//!   affine in the classical set, scale affine in MAD, `ξ` free in
//!   `(−0.5, 0.95)`.
//! * EGP `[s₀, s_mad, u₀, u_hres, u_ctrl, u_mean, u_pr0, p₀, p_pr0]`: `σ`
//!   affine in MAD, `μ = max(0, affine)`, `κ = max(μ/σ, κ_floor)`,
//!   `π = clamp(p₀ + p_pr0·PR0, 0, 1)`, `ξ` fixed per station.
//!
//! [`apply_links`] always returns a valid law by flooring scales; the
//! objective adds a penalty of `10⁶ + violation` whenever a floor was hit.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distributions::{
    crps_numeric_tol, egp_fit_pwm, pwm_triple_weighted, CgevParams, CsgParams, EgpParams,
};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::predictive::Predictive;
use crate::predictors::{predictor_value, EnsembleStats};

pub const EMOS_COVARIATES: [&str; 5] = ["HRES", "CTRL", "MEAN", "PR0", "MAD"];
const HRES: usize = 0;
const CTRL: usize = 1;
const MEAN: usize = 2;
const PR0: usize = 3;
const MAD: usize = 4;

/// Offset added to penalized objectives.
pub const PENALTY: f64 = 1e6;
pub const CGEV_XI_RANGE: (f64, f64) = (-0.5, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Csg,
    Cgev,
    Egp,
}

impl Family {
    pub fn coefficient_names(self) -> &'static [&'static str] {
        match self {
            Family::Csg => &["m0", "m_hres", "m_ctrl", "m_mean", "m_pr0", "v0", "v_mean", "delta"],
            Family::Cgev => &["l0", "l_hres", "l_ctrl", "l_mean", "l_pr0", "s0", "s_mad", "xi"],
            Family::Egp => &["s0", "s_mad", "u0", "u_hres", "u_ctrl", "u_mean", "u_pr0", "p0", "p_pr0"],
        }
    }

    pub fn n_coefficients(self) -> usize {
        self.coefficient_names().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    MaxWithZero,
    ClampUnit,
    Fixed,
}

/// One linked parameter: its covariates and output transform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDescriptor {
    pub parameter: String,
    pub covariates: Vec<String>,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub family: Family,
    pub links: Vec<LinkDescriptor>,
}

impl LinkSpec {
    pub fn for_family(family: Family) -> Self {
        let d = |p: &str, c: &[&str], t| LinkDescriptor {
            parameter: p.into(),
            covariates: c.iter().map(|s| s.to_string()).collect(),
            transform: t,
        };
        let set_c = ["HRES", "CTRL", "MEAN", "PR0"];
        let links = match family {
            Family::Csg => vec![
                d("mean", &set_c, Transform::Identity),
                d("variance", &["MEAN"], Transform::Identity),
                d("delta", &[], Transform::MaxWithZero),
            ],
            Family::Cgev => vec![
                d("location", &set_c, Transform::Identity),
                d("scale", &["MAD"], Transform::Identity),
                d("xi", &[], Transform::Identity),
            ],
            Family::Egp => vec![
                d("sigma", &["MAD"], Transform::Identity),
                d("mu", &set_c, Transform::MaxWithZero),
                d("pi", &["PR0"], Transform::ClampUnit),
                d("xi", &[], Transform::Fixed),
            ],
        };
        Self { family, links }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmosConfig {
    pub min_cases: usize,
    pub optimizer: NelderMeadConfig,
    pub sigma_floor: f64,
    pub kappa_floor: f64,
    /// Absolute tolerance of the quadrature CRPS used for CSG and CGEV.
    pub quad_tol: f64,
    pub xi_min_positive: usize,
    pub xi_default: f64,
    pub xi_bounds: (f64, f64),
    pub dry_threshold: f64,
}

impl Default for EmosConfig {
    fn default() -> Self {
        Self {
            min_cases: 50,
            optimizer: NelderMeadConfig::default(),
            sigma_floor: 1e-6,
            kappa_floor: 1e-3,
            quad_tol: 1e-6,
            xi_min_positive: 100,
            xi_default: 0.2,
            xi_bounds: (0.01, 0.7),
            dry_threshold: 0.05,
        }
    }
}

/// One training case: EMOS covariates and the verifying observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosCase {
    pub covariates: [f64; 5],
    pub obs: f64,
}

/// Covariates of one record.
pub fn emos_covariates(ds: &Dataset, i: usize) -> Result<[f64; 5]> {
    let r = &ds.records[i];
    let stats = EnsembleStats::new(&r.members);
    let mut c = [0.0; 5];
    for (v, name) in c.iter_mut().zip(EMOS_COVARIATES) {
        *v = predictor_value(r, &stats, name)?;
    }
    Ok(c)
}

/// Training cases for the given records; records without observation are
/// skipped.
pub fn emos_cases(ds: &Dataset, indices: &[usize]) -> Result<Vec<EmosCase>> {
    indices
        .iter()
        .filter_map(|&i| ds.observation(i).map(|y| (i, y)))
        .map(|(i, obs)| Ok(EmosCase { covariates: emos_covariates(ds, i)?, obs }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosModel {
    pub station_id: String,
    pub family: Family,
    pub link: LinkSpec,
    pub coefficients: Vec<f64>,
    /// Station tail shape (EGP only).
    pub xi: Option<f64>,
    pub sigma_floor: f64,
    pub kappa_floor: f64,
    pub evaluations: usize,
    pub start_objective: f64,
    pub final_objective: f64,
}

/// A linked law and the total amount by which raw link outputs fell below
/// their floors or outside their ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEval {
    pub dist: Predictive,
    pub violation: f64,
}

fn affine_c(b: &[f64], x: &[f64; 5]) -> f64 {
    b[0] + b[1] * x[HRES] + b[2] * x[CTRL] + b[3] * x[MEAN] + b[4] * x[PR0]
}

/// Evaluates the links of `family` at covariates `x`.
pub fn eval_links(
    family: Family,
    coef: &[f64],
    x: &[f64; 5],
    xi: f64,
    sigma_floor: f64,
    kappa_floor: f64,
) -> LinkEval {
    assert_eq!(coef.len(), family.n_coefficients(), "coefficient count");
    let mut violation = 0.0;
    let mut floor = |v: f64, f: f64| {
        if v.is_nan() {
            violation += 1.0;
            f
        } else if v < f {
            violation += f - v;
            f
        } else {
            v
        }
    };
    match family {
        Family::Csg => {
            let mu = floor(affine_c(&coef[0..5], x), sigma_floor);
            let var = floor(coef[5] + coef[6] * x[MEAN], sigma_floor);
            let delta = coef[7].max(0.0);
            let kappa = mu * mu / var;
            let theta = var / mu;
            let params = CsgParams::new(delta, kappa, theta).unwrap_or(CsgParams {
                pi: 0.0,
                delta: 0.0,
                kappa: 1.0,
                theta: sigma_floor,
            });
            LinkEval {
                dist: Predictive::Csg { params },
                violation,
            }
        }
        Family::Cgev => {
            let mu = affine_c(&coef[0..5], x);
            let sigma = floor(coef[5] + coef[6] * x[MAD], sigma_floor);
            let (lo, hi) = CGEV_XI_RANGE;
            let raw = coef[7];
            let xi = if raw < lo {
                violation += lo - raw;
                lo
            } else if raw > hi {
                violation += raw - hi;
                hi
            } else {
                raw
            };
            let mu = if mu.is_finite() { mu } else { 0.0 };
            let params = CgevParams::new(mu, sigma, xi).expect("floored CGEV parameters are valid");
            LinkEval {
                dist: Predictive::Cgev { params },
                violation,
            }
        }
        Family::Egp => {
            let sigma = floor(coef[0] + coef[1] * x[MAD], sigma_floor);
            let mu = affine_c(&coef[2..7], x).max(0.0);
            let kappa = (mu / sigma).max(kappa_floor);
            let kappa = if kappa.is_finite() { kappa } else { kappa_floor };
            let pi = (coef[7] + coef[8] * x[PR0]).clamp(0.0, 1.0);
            let pi = if pi.is_nan() { 0.0 } else { pi };
            let params = EgpParams::new(pi, kappa, sigma, xi).expect("floored EGP parameters are valid");
            LinkEval {
                dist: Predictive::Egp { params },
                violation,
            }
        }
    }
}

/// The predictive law of a fitted model at covariates `x`.
pub fn apply_links(m: &EmosModel, x: &[f64; 5]) -> Predictive {
    eval_links(
        m.family,
        &m.coefficients,
        x,
        m.xi.unwrap_or(0.0),
        m.sigma_floor,
        m.kappa_floor,
    )
    .dist
}

/// As [`apply_links`] with covariates given by name.
pub fn apply_links_named(m: &EmosModel, names: &[String], values: &[f64]) -> Result<Predictive> {
    let mut x = [0.0; 5];
    for (v, c) in x.iter_mut().zip(EMOS_COVARIATES) {
        let j = names
            .iter()
            .position(|n| n == c)
            .ok_or_else(|| Error::MissingAux(format!("EMOS covariate {c}")))?;
        *v = values[j];
    }
    Ok(apply_links(m, &x))
}

fn case_crps(dist: &Predictive, y: f64, quad_tol: f64) -> f64 {
    let r = match dist {
        Predictive::Csg { params } => crps_numeric_tol(params, y, quad_tol),
        Predictive::Cgev { params } => crps_numeric_tol(params, y, quad_tol),
        other => other.crps(y),
    };
    r.unwrap_or(f64::NAN)
}

/// Mean CRPS of the linked laws over `cases`; `10⁶ + mean violation` when
/// any case hits a floor or the CRPS is not finite.
pub fn mean_crps_objective(coef: &[f64], cases: &[EmosCase], family: Family, xi: f64, cfg: &EmosConfig) -> f64 {
    if cases.is_empty() {
        return f64::NAN;
    }
    let per_case = crate::par::map(cases, |c| {
        let l = eval_links(family, coef, &c.covariates, xi, cfg.sigma_floor, cfg.kappa_floor);
        if l.violation > 0.0 {
            (f64::NAN, l.violation)
        } else {
            (case_crps(&l.dist, c.obs, cfg.quad_tol), 0.0)
        }
    });
    let n = cases.len() as f64;
    let violation: f64 = per_case.iter().map(|p| p.1).sum();
    let bad = per_case.iter().filter(|p| p.1 == 0.0 && !p.0.is_finite()).count();
    if violation > 0.0 || bad > 0 {
        return PENALTY + violation / n + bad as f64;
    }
    per_case.iter().map(|p| p.0).sum::<f64>() / n
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Intercept-only start matching climatology, and simplex steps scaled to
/// the observations and covariates.
fn start_point(family: Family, cases: &[EmosCase], xi: f64, cfg: &EmosConfig) -> (Vec<f64>, Vec<f64>) {
    let obs: Vec<f64> = cases.iter().map(|c| c.obs).collect();
    let (m, s) = mean_sd(&obs);
    let s = s.max(0.1);
    let dry = obs.iter().filter(|&&y| y < cfg.dry_threshold).count() as f64 / obs.len() as f64;
    let cov_sd: Vec<f64> = (0..5)
        .map(|j| mean_sd(&cases.iter().map(|c| c.covariates[j]).collect::<Vec<_>>()).1)
        .collect();
    let slope = |j: usize| if cov_sd[j] > 0.0 { 0.1 * s / cov_sd[j] } else { 0.1 };
    let step_c = |s0: f64| vec![s0, slope(HRES), slope(CTRL), slope(MEAN), slope(PR0)];
    match family {
        Family::Csg => {
            let x0 = vec![m + 0.5, 0.0, 0.0, 0.0, 0.0, s * s, 0.0, 0.5];
            let mut st = step_c(0.1 * s);
            st.extend([0.1 * s * s, 0.1 * s * s / cov_sd[MEAN].max(1e-3), 0.1 * s]);
            (x0, st)
        }
        Family::Cgev => {
            let scale = (s * 6f64.sqrt() / std::f64::consts::PI).max(0.05);
            let x0 = vec![m - 0.45 * s, 0.0, 0.0, 0.0, 0.0, scale, 0.0, 0.1];
            let mut st = step_c(0.1 * s);
            st.extend([0.1 * scale, slope(MAD), 0.05]);
            (x0, st)
        }
        Family::Egp => {
            let pos: Vec<f64> = obs.iter().copied().filter(|&y| y >= cfg.dry_threshold).collect();
            let mpos = if pos.is_empty() { s } else { mean_sd(&pos).0 };
            // With κ = 1 the positive part is GP with mean σ/(1 − ξ).
            let sigma = (mpos * (1.0 - xi)).max(0.05);
            let x0 = vec![sigma, 0.0, sigma, 0.0, 0.0, 0.0, 0.0, dry, 0.0];
            let mut st = vec![0.1 * sigma, slope(MAD)];
            st.extend(step_c(0.1 * sigma));
            st.extend([0.05, 0.05]);
            (x0, st)
        }
    }
}

/// Fits the links of `family` to `cases` by Nelder–Mead on the mean CRPS.
/// Cases are put in a canonical order first, so the fit does not depend on
/// their input order.
pub fn emos_fit(
    cases: &[EmosCase],
    family: Family,
    station_id: &str,
    xi: Option<f64>,
    cfg: &EmosConfig,
) -> Result<EmosModel> {
    if cases.len() < cfg.min_cases.max(1) {
        return Err(Error::InsufficientData(format!(
            "station {station_id}: {} EMOS training cases, need {}",
            cases.len(),
            cfg.min_cases
        )));
    }
    let xi_v = match family {
        Family::Egp => xi.unwrap_or(cfg.xi_default),
        _ => 0.0,
    };
    let mut sorted = cases.to_vec();
    sorted.sort_by(|a, b| {
        a.obs
            .total_cmp(&b.obs)
            .then_with(|| {
                a.covariates
                    .iter()
                    .zip(&b.covariates)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let (x0, steps) = start_point(family, &sorted, xi_v, cfg);
    for c in &sorted {
        let l = eval_links(family, &x0, &c.covariates, xi_v, cfg.sigma_floor, cfg.kappa_floor);
        let v = case_crps(&l.dist, c.obs, cfg.quad_tol);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective(format!(
                "station {station_id}, case with obs {} and covariates {:?}",
                c.obs, c.covariates
            )));
        }
    }
    let min = nelder_mead(
        |c| mean_crps_objective(c, &sorted, family, xi_v, cfg),
        &x0,
        &steps,
        &cfg.optimizer,
    );
    Ok(EmosModel {
        station_id: station_id.to_string(),
        family,
        link: LinkSpec::for_family(family),
        coefficients: min.x,
        xi: (family == Family::Egp).then_some(xi_v),
        sigma_floor: cfg.sigma_floor,
        kappa_floor: cfg.kappa_floor,
        evaluations: min.evaluations,
        start_objective: min.start_f,
        final_objective: min.f,
    })
}

/// Tail shape of a station's positive climatology by PWM, clamped to
/// `cfg.xi_bounds`. Returns the default and `false` when there are too few
/// wet observations or the PWM system has no solution.
pub fn station_xi_climatology(obs: &[f64], cfg: &EmosConfig) -> (f64, bool) {
    let mut pos: Vec<f64> = obs.iter().copied().filter(|&y| y >= cfg.dry_threshold).collect();
    if pos.len() < cfg.xi_min_positive {
        log::warn!(
            "{} wet observations (< {}); using default ξ = {}",
            pos.len(),
            cfg.xi_min_positive,
            cfg.xi_default
        );
        return (cfg.xi_default, false);
    }
    pos.sort_by(f64::total_cmp);
    let w = vec![1.0 / pos.len() as f64; pos.len()];
    match pwm_triple_weighted(&pos, &w).and_then(|t| egp_fit_pwm(&t)) {
        Ok(f) => (f.xi.clamp(cfg.xi_bounds.0, cfg.xi_bounds.1), true),
        Err(e) => {
            log::warn!("climatological PWM fit failed ({e}); using default ξ = {}", cfg.xi_default);
            (cfg.xi_default, false)
        }
    }
}

impl EmosModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: EmosModel = serde_json::from_str(s)?;
        if m.coefficients.len() != m.family.n_coefficients() {
            return Err(Error::Schema(format!(
                "{} coefficients for family {:?}",
                m.coefficients.len(),
                m.family
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(family: Family, coefficients: Vec<f64>, xi: Option<f64>) -> EmosModel {
        EmosModel {
            station_id: "S".into(),
            family,
            link: LinkSpec::for_family(family),
            coefficients,
            xi,
            sigma_floor: 1e-6,
            kappa_floor: 1e-3,
            evaluations: 0,
            start_objective: 0.0,
            final_objective: 0.0,
        }
    }

    #[test]
    fn egp_degenerate_intercepts_hit_kappa_floor() {
        let m = model(Family::Egp, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0], Some(0.2));
        let Predictive::Egp { params } = apply_links(&m, &[1.0, 1.0, 1.0, 0.5, 0.3]) else { panic!() };
        assert_eq!(params.pi, 0.5);
        assert_eq!(params.kappa, 1e-3);
        assert_eq!(params.sigma, 1.0);
    }

    #[test]
    fn egp_pi_clamp_link() {
        let m = model(Family::Egp, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -0.2, 1.0], Some(0.2));
        let Predictive::Egp { params } = apply_links(&m, &[0.0, 0.0, 0.0, 1.0, 0.0]) else { panic!() };
        assert_abs_diff_eq!(params.pi, 0.8, epsilon = 1e-15);
        let m = model(Family::Egp, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0], Some(0.2));
        let Predictive::Egp { params } = apply_links(&m, &[0.0, 0.0, 0.0, 1.0, 0.0]) else { panic!() };
        assert_eq!(params.pi, 1.0);
    }

    #[test]
    fn csg_moment_relations() {
        let m = model(Family::Csg, vec![2.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.5], None);
        let Predictive::Csg { params } = apply_links(&m, &[0.0; 5]) else { panic!() };
        assert_abs_diff_eq!(params.kappa, 1.0);
        assert_abs_diff_eq!(params.theta, 2.0);
        assert_abs_diff_eq!(params.delta, 0.5);
    }

    #[test]
    fn penalty_orders_above_feasible() {
        let cases = vec![
            EmosCase {
                covariates: [1.0, 1.0, 1.0, 0.5, 0.3],
                obs: 0.4,
            };
            3
        ];
        let cfg = EmosConfig::default();
        let bad = vec![-1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
        let good = vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
        let fb = mean_crps_objective(&bad, &cases, Family::Egp, 0.2, &cfg);
        let fg = mean_crps_objective(&good, &cases, Family::Egp, 0.2, &cfg);
        assert!(fb > PENALTY && fb.is_finite());
        assert!(fg < 10.0);
    }

    #[test]
    fn near_point_mass_objective_is_small() {
        // π → 1 with the observation dry
        let cases = vec![EmosCase {
            covariates: [0.0; 5],
            obs: 0.0,
        }];
        let coef = vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0 - 1e-9, 0.0];
        let f = mean_crps_objective(&coef, &cases, Family::Egp, 0.2, &EmosConfig::default());
        assert!(f < 1e-6, "{f}");
    }

    #[test]
    fn objective_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let cases: Vec<EmosCase> = (0..40)
            .map(|_| EmosCase {
                covariates: [rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0, rng.random(), rng.random()],
                obs: rng.random::<f64>() * 4.0,
            })
            .collect();
        let cfg = EmosConfig::default();
        for (family, coef) in [
            (Family::Egp, vec![1.0, 0.3, 0.2, 0.1, 0.1, 0.3, 0.0, 0.4, -0.2]),
            (Family::Csg, vec![1.0, 0.1, 0.1, 0.3, 0.0, 1.5, 0.2, 0.4]),
            (Family::Cgev, vec![0.5, 0.1, 0.1, 0.3, 0.0, 1.0, 0.3, 0.1]),
        ] {
            let xi = 0.2;
            let f = mean_crps_objective(&coef, &cases, family, xi, &cfg);
            let mut direct = 0.0;
            for c in &cases {
                let m = model(family, coef.clone(), Some(xi));
                let d = apply_links(&m, &c.covariates);
                direct += crate::distributions::crps_numeric(&|y: f64| d.cdf(y), c.obs).unwrap();
            }
            assert_abs_diff_eq!(f, direct / 40.0, epsilon = 2e-5);
        }
    }

    #[test]
    fn too_few_cases() {
        let cases = vec![
            EmosCase {
                covariates: [0.0; 5],
                obs: 0.0,
            };
            10
        ];
        assert!(matches!(
            emos_fit(&cases, Family::Egp, "S", None, &EmosConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    fn egp_synthetic(n: usize, seed: u64, scale: f64) -> Vec<EmosCase> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mean = rng.random::<f64>() * 4.0;
                let pr0 = rng.random::<f64>();
                let mad = 0.2 + rng.random::<f64>();
                let sigma = 0.5 + 0.8 * mad;
                let mu = 0.2 + 0.9 * mean;
                let p = EgpParams::new((0.8 - 0.7 * pr0).clamp(0.0, 1.0), (mu / sigma).max(1e-3), sigma, 0.2).unwrap();
                EmosCase {
                    covariates: [scale * (mean + 0.1), scale * mean, scale * mean, pr0, scale * mad],
                    obs: scale * p.sample(&mut rng),
                }
            })
            .collect()
    }

    #[test]
    fn zero_budget_returns_start() {
        let cases = egp_synthetic(200, 1, 1.0);
        let cfg = EmosConfig {
            optimizer: NelderMeadConfig {
                restarts: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = emos_fit(&cases, Family::Egp, "S", Some(0.2), &cfg).unwrap();
        let (x0, _) = start_point(Family::Egp, &cases, 0.2, &cfg);
        assert_eq!(m.coefficients, x0);
        assert_eq!(m.start_objective, m.final_objective);
    }

    #[test]
    fn fit_improves_and_ignores_case_order() {
        let cases = egp_synthetic(300, 2, 1.0);
        let cfg = EmosConfig {
            optimizer: NelderMeadConfig {
                restarts: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = emos_fit(&cases, Family::Egp, "S", Some(0.2), &cfg).unwrap();
        assert!(a.final_objective <= a.start_objective);
        let mut rev = cases.clone();
        rev.reverse();
        let b = emos_fit(&rev, Family::Egp, "S", Some(0.2), &cfg).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        let back = EmosModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn xi_climatology() {
        let p = EgpParams::new(0.0, 1.0, 1.0, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        let (xi, ok) = station_xi_climatology(&obs, &EmosConfig::default());
        assert!(ok && (0.25..=0.35).contains(&xi), "{xi}");
        let (xi, ok) = station_xi_climatology(&[0.0; 500], &EmosConfig::default());
        assert!(!ok && xi == 0.2);
        let p = EgpParams::new(0.0, 1.0, 1.0, 0.9).unwrap();
        let obs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        assert_eq!(station_xi_climatology(&obs, &EmosConfig::default()).0, 0.7);
    }

    proptest! {
        #[test]
        fn links_always_give_valid_laws(
            coef in prop::collection::vec(-5.0f64..5.0, 9),
            x in prop::array::uniform5(0.0f64..20.0),
            xi in 0.01f64..0.7,
        ) {
            let mut x = x;
            x[PR0] = x[PR0] / 20.0;
            for family in [Family::Csg, Family::Cgev, Family::Egp] {
                let c = &coef[..family.n_coefficients()];
                let d = eval_links(family, c, &x, xi, 1e-6, 1e-3).dist;
                let ok = match d {
                    Predictive::Csg { params } => params.validate().is_ok(),
                    Predictive::Cgev { params } => params.validate().is_ok(),
                    Predictive::Egp { params } => params.validate().is_ok(),
                    _ => false,
                };
                prop_assert!(ok, "{family:?} {d:?}");
            }
        }
    }
}
