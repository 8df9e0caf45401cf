//! Derivative-free minimization: Nelder–Mead with restarts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    /// Number of simplex runs; each restarts from the best point so far.
    pub restarts: usize,
    /// Objective evaluations per run.
    pub max_evals: usize,
    /// A run stops when the simplex values span less than this (relative).
    pub f_tol: f64,
    /// Stop restarting when a run improves the best value by less than this
    /// (relative).
    pub restart_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_evals: 200,
            f_tol: 1e-10,
            restart_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub start_f: f64,
    pub evaluations: usize,
    pub runs: usize,
}

/// Minimizes `f` from `x0`. The initial simplex of each run offsets one
/// coordinate at a time by `steps[i]`. With a zero budget the start point is
/// returned unchanged.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    cfg: &NelderMeadConfig,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let start_f = eval(x0, &mut evals);
    let mut best_x = x0.to_vec();
    let mut best_f = start_f;
    let mut runs = 0;
    if n == 0 {
        return Minimum {
            x: best_x,
            f: best_f,
            start_f,
            evaluations: evals,
            runs,
        };
    }
    for run in 0..cfg.restarts {
        if cfg.max_evals <= n {
            break;
        }
        runs += 1;
        let before = best_f;
        // Later runs shrink their initial simplex.
        let scale = 0.5f64.powi(run.min(6) as i32);
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        let mut used = 0;
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += steps[i] * scale;
            let v = eval(&x, &mut evals);
            used += 1;
            simplex.push((x, v));
        }
        while used < cfg.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let lo = simplex[0].1;
            let hi = simplex[n].1;
            if (hi - lo).abs() <= cfg.f_tol * (lo.abs() + cfg.f_tol) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect()
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            used += 1;
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                used += 1;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                used += 1;
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = x0.iter().zip(&p.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let v = eval(&xs, &mut evals);
                        *p = (xs, v);
                        used += 1;
                    }
                }
            }
        }
        for (x, v) in simplex {
            if v < best_f {
                best_f = v;
                best_x = x;
            }
        }
        if before - best_f <= cfg.restart_tol * before.abs() {
            break;
        }
    }
    Minimum {
        x: best_x,
        f: best_f,
        start_f,
        evaluations: evals,
        runs,
    }
}
