//! One-step debiased estimates of individual policy coefficients and their
//! confidence intervals.
//!
//! For each slope `j` the remaining slopes `nu_j` are nuisance. A Dantzig
//! selector projects the `(theta_j, nu_j)` Hessian block onto the nuisance
//! directions, giving a decorrelated score whose single Newton step corrects
//! the sparse estimate. Intervals come from the asymptotic variance of the
//! score or from a subject-level bootstrap of the whole fit.

pub mod dantzig;
pub mod derivatives;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::loss::{LossContext, Weighting};
use crate::nuisance::QModel;
use crate::optimizer::{cv_select, estimate_sparse_at, CvRule, OptimizerConfig};
use crate::rng::stream;

pub use dantzig::{dantzig_solve, decorrelated_score, min_feasible_lambda, DecorrelationFit};
pub use derivatives::{
    gradient_stencil, hessian_stencil, numeric_gradient, numeric_hessian, sphere_derivatives,
    sphere_hessian, SphereDerivatives, Stencil,
};

/// Information values at or below this magnitude are treated as degenerate.
pub const INFO_EPSILON: f64 = 1e-8;

/// `theta_hat_j - score / info`.
pub fn one_step(j: usize, theta_hat_j: f64, score: f64, info: f64) -> Result<f64> {
    if !(info.abs() > INFO_EPSILON) {
        return Err(Error::DegenerateInformation {
            coordinate: j,
            info,
        });
    }
    Ok(theta_hat_j - score / info)
}

/// `v^T [(1/n) sum_i g_i g_i^T] v` with `v = (1, -w)`. Each row of `grads`
/// is ordered `(theta_j, nu_j)`.
pub fn sigma_s_hat(grads: &[Vec<f64>], w_hat: &[f64]) -> Result<f64> {
    if grads.is_empty() {
        return Err(Error::InvalidArgument("no per-sample gradients".into()));
    }
    let mut total = 0.0;
    for g in grads {
        if g.len() != w_hat.len() + 1 {
            return Err(Error::Dimension {
                expected: w_hat.len() + 1,
                got: g.len(),
            });
        }
        let proj = decorrelated_score(g[0], &g[1..], w_hat);
        total += proj * proj;
    }
    Ok(total / grads.len() as f64)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}

/// `theta_tilde -/+ z_{1 - alpha/2} sqrt(sigma) / (sqrt(n) |info|)`.
pub fn asymptotic_ci(
    theta_tilde: f64,
    sigma_s: f64,
    info: f64,
    n: usize,
    alpha: f64,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if !(sigma_s >= 0.0) || n == 0 || !(info.abs() > 0.0) {
        return Err(Error::InvalidArgument(
            "need sigma_s >= 0, n > 0 and nonzero information".into(),
        ));
    }
    let z = if alpha == 1.0 {
        0.0
    } else {
        normal_quantile(1.0 - alpha / 2.0)
    };
    let half = z * sigma_s.sqrt() / ((n as f64).sqrt() * info.abs());
    Ok((theta_tilde - half, theta_tilde + half))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval from order statistics, rounding both ends outward.
pub fn percentile_interval(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let last = (sorted.len() - 1) as f64;
    let lo = ((alpha / 2.0) * last).floor() as usize;
    let hi = ((1.0 - alpha / 2.0) * last).ceil() as usize;
    (sorted[lo], sorted[hi.min(sorted.len() - 1)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepResult {
    /// Slope index (1-based).
    pub j: usize,
    pub theta_hat: f64,
    pub theta_tilde: f64,
    pub score: f64,
    pub info: f64,
    pub sigma_s_hat: f64,
    pub lambda_w: f64,
    /// Set when the information was degenerate and `theta_tilde = theta_hat`.
    pub degenerate: bool,
    pub asymptotic_ci: Option<(f64, f64)>,
    pub bootstrap_ci: Option<(f64, f64)>,
}

/// `(c, H_nu_nu)` for slope `j` from a full slope Hessian.
fn blocks(h: &[Vec<f64>], j: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nu: Vec<usize> = (0..h.len()).filter(|&k| k != j - 1).collect();
    let c = nu.iter().map(|&k| h[k][j - 1]).collect();
    let hnn = nu
        .iter()
        .map(|&a| nu.iter().map(|&b| h[a][b]).collect())
        .collect();
    (c, hnn)
}

/// One-step estimates for every slope from precomputed derivatives.
pub fn one_step_from_derivatives(
    theta_hat: &[f64],
    der: &SphereDerivatives,
    lambda_w: f64,
    alpha: f64,
) -> Result<Vec<OneStepResult>> {
    let d = der.d();
    if theta_hat.len() != d + 1 {
        return Err(Error::Dimension {
            expected: d + 1,
            got: theta_hat.len(),
        });
    }
    let n = der.per_sample_grad.len();
    (1..=d)
        .map(|j| {
            let (c, hnn) = blocks(&der.hessian, j);
            let fit = dantzig_solve(&hnn, &c, lambda_w)?;
            let nu: Vec<usize> = (0..d).filter(|&k| k != j - 1).collect();
            let grad_nu: Vec<f64> = nu.iter().map(|&k| der.grad[k]).collect();
            let score = decorrelated_score(der.grad[j - 1], &grad_nu, &fit.w_hat);
            let info = decorrelated_score(der.hessian[j - 1][j - 1], &c, &fit.w_hat);
            let (theta_tilde, degenerate) = match one_step(j, theta_hat[j], score, info) {
                Ok(t) => (t, false),
                Err(Error::DegenerateInformation { .. }) => (theta_hat[j], true),
                Err(e) => return Err(e),
            };
            let rows: Vec<Vec<f64>> = der
                .per_sample_grad
                .iter()
                .map(|g| {
                    std::iter::once(g[j - 1])
                        .chain(nu.iter().map(|&k| g[k]))
                        .collect()
                })
                .collect();
            let sigma = sigma_s_hat(&rows, &fit.w_hat)?;
            let asymptotic_ci = if degenerate {
                None
            } else {
                Some(asymptotic_ci(theta_tilde, sigma, info, n, alpha)?)
            };
            Ok(OneStepResult {
                j,
                theta_hat: theta_hat[j],
                theta_tilde,
                score,
                info,
                sigma_s_hat: sigma,
                lambda_w,
                degenerate,
                asymptotic_ci,
                bootstrap_ci: None,
            })
        })
        .collect()
}

/// One-step estimates for every slope of `theta_hat` on the weighted loss.
pub fn one_step_all(
    ds: &Dataset,
    q: &QModel,
    tau: f64,
    theta_hat: &[f64],
    lambda_w: f64,
    alpha: f64,
) -> Result<Vec<OneStepResult>> {
    let ctx = LossContext::new(ds, q, tau, Weighting::Weighted)?;
    let der = sphere_derivatives(&ctx, theta_hat, ds.horizon())?;
    one_step_from_derivatives(theta_hat, &der, lambda_w, alpha)
}

/// Candidate `lambda_w` values: `count` log-spaced values from the largest
/// `||c_j||_inf` down to `ratio` times it.
pub fn lambda_w_grid(hessian: &[Vec<f64>], ratio: f64, count: usize) -> Vec<f64> {
    let top = (1..=hessian.len())
        .map(|j| {
            blocks(hessian, j)
                .0
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()))
        })
        .fold(0.0_f64, f64::max);
    if !(top > 0.0) {
        return vec![0.0];
    }
    crate::lasso::log_grid(top, ratio, count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaWChoice {
    pub grid: Vec<f64>,
    /// Mean projection error over folds; infinite where some fold was infeasible.
    pub mean_error: Vec<f64>,
    pub se: Vec<f64>,
    pub chosen: f64,
}

/// One-standard-error choice from fold-level errors (`errors[l][k]` is
/// grid point `l` on fold `k`).
pub fn one_se_choice(grid: &[f64], errors: &[Vec<f64>]) -> Result<LambdaWChoice> {
    let sel = cv_select(grid, errors, CvRule::OneStandardError)?;
    Ok(LambdaWChoice {
        grid: grid.to_vec(),
        mean_error: sel.mean,
        se: sel.se,
        chosen: grid[sel.chosen],
    })
}

/// Cross-validated `lambda_w` shared by all slopes. The validation error of
/// slope `j` is `||c_j - H_nu_nu w_j||_inf` on the held-out Hessian, averaged
/// over `j`; the largest value within one standard error of the best wins.
pub fn tune_lambda_w(
    ds: &Dataset,
    theta_hat: &[f64],
    q: &QModel,
    tau: f64,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<LambdaWChoice> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda_w grid is empty".into()));
    }
    if grid.len() == 1 {
        return Ok(LambdaWChoice {
            grid: grid.to_vec(),
            mean_error: vec![f64::NAN],
            se: vec![f64::NAN],
            chosen: grid[0],
        });
    }
    let splits = split_indices(ds.n(), folds, seed)?;
    let per_fold = splits
        .par_iter()
        .map(|f| {
            let train = LossContext::new(&ds.subset(&f.train), q, tau, Weighting::Weighted)?;
            let val = LossContext::new(&ds.subset(&f.validation), q, tau, Weighting::Weighted)?;
            let h_train = sphere_hessian(&train, theta_hat, ds.horizon())?;
            let h_val = sphere_hessian(&val, theta_hat, ds.horizon())?;
            let d = h_train.len();
            grid.iter()
                .map(|&lw| {
                    let mut total = 0.0;
                    for j in 1..=d {
                        let (c, hnn) = blocks(&h_train, j);
                        let fit = match dantzig_solve(&hnn, &c, lw) {
                            Ok(f) => f,
                            Err(Error::DantzigInfeasible { .. }) => return Ok(f64::INFINITY),
                            Err(e) => return Err(e),
                        };
                        let (cv, hv) = blocks(&h_val, j);
                        let err = hv
                            .iter()
                            .zip(&cv)
                            .map(|(row, ci)| {
                                (ci - row.iter().zip(&fit.w_hat).map(|(a, b)| a * b).sum::<f64>())
                                    .abs()
                            })
                            .fold(0.0, f64::max);
                        total += err;
                    }
                    Ok(total / d as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let errors: Vec<Vec<f64>> = (0..grid.len())
        .map(|l| per_fold.iter().map(|f| f[l]).collect())
        .collect();
    one_se_choice(grid, &errors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Test hook: every resample is the identity.
    pub identity_resample: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 100,
            alpha: 0.05,
            seed: 0,
            identity_resample: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Percentile interval per slope.
    pub intervals: Vec<(f64, f64)>,
    /// One-step estimates of each kept replicate.
    pub replicates: Vec<Vec<f64>>,
    pub dropped: usize,
}

/// Subject-level bootstrap of the sparse fit and the one-step correction,
/// with the Q-model and both penalties frozen.
pub fn bootstrap_inference(
    ds: &Dataset,
    q: &QModel,
    tau: f64,
    opt: &OptimizerConfig,
    lambda_theta: f64,
    lambda_w: f64,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    if cfg.replicates < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    let n = ds.n();
    let outcomes: Vec<Result<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let idx: Vec<usize> = if cfg.identity_resample {
                (0..n).collect()
            } else {
                let mut rng = stream(cfg.seed, "bootstrap", b as u64, 0);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            };
            let sample = ds.subset(&idx);
            let est = estimate_sparse_at(&sample, q, tau, opt, lambda_theta)?;
            let steps = one_step_all(&sample, q, tau, &est.theta, lambda_w, cfg.alpha)?;
            Ok(steps.iter().map(|s| s.theta_tilde).collect())
        })
        .collect();
    let mut replicates = Vec::with_capacity(cfg.replicates);
    let mut dropped = 0;
    for (b, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => replicates.push(r),
            Err(e) => {
                log::warn!("bootstrap replicate {b} dropped: {e}");
                dropped += 1;
            }
        }
    }
    if dropped * 10 > cfg.replicates {
        return Err(Error::Convergence(format!(
            "{dropped} of {} bootstrap replicates failed",
            cfg.replicates
        )));
    }
    if replicates.len() < 2 {
        return Err(Error::Convergence(
            "fewer than 2 bootstrap replicates succeeded".into(),
        ));
    }
    let d = replicates[0].len();
    let intervals = (0..d)
        .map(|j| {
            let mut v: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            percentile_interval(&v, cfg.alpha)
        })
        .collect();
    Ok(BootstrapResult {
        intervals,
        replicates,
        dropped,
    })
}

/// Attaches bootstrap intervals to one-step results.
pub fn with_bootstrap(
    mut results: Vec<OneStepResult>,
    boot: &BootstrapResult,
) -> Vec<OneStepResult> {
    for (r, iv) in results.iter_mut().zip(&boot.intervals) {
        r.bootstrap_ci = Some(*iv);
    }
    results
}
