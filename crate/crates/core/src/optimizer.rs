//! L1-penalized minimization on the unit sphere.
//!
//! [`coordinate_descent_sphere`] runs a proximal coordinate descent that
//! renormalizes after every coordinate update, preceded by a per-coordinate
//! scan over a few starting offsets. [`refit_on_support`] then re-optimizes the
//! unpenalized objective on the selected support with a projected gradient
//! method on the restricted sphere. The intercept `theta_0` is never
//! penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::lasso::soft_threshold;
use crate::loss::{LossContext, Objective, Weighting};
use crate::nuisance::QModel;
use crate::policy::{l2_norm, sgn};

/// Bracketing strategy for the one-dimensional coordinate minimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Walk downhill from the current value with growing steps.
    Local,
    /// Scan an evenly spaced grid over the whole window.
    Scan,
}

/// How a penalty is picked from cross-validation scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Smallest mean validation loss; ties go to the larger penalty.
    Min,
    /// Largest penalty whose mean loss is within one standard error of the minimum.
    OneStandardError,
}

/// Fold-averaged scores and the selected grid index.
#[derive(Clone, Debug, PartialEq)]
pub struct CvSelection {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub chosen: usize,
}

/// Selects from `errors[l][k]`, the loss of grid point `l` on fold `k`.
/// Grid points with any non-finite fold loss are never chosen.
pub fn cv_select(grid: &[f64], errors: &[Vec<f64>], rule: CvRule) -> Result<CvSelection> {
    if grid.len() != errors.len() || grid.is_empty() {
        return Err(Error::InvalidArgument(
            "grid and fold errors must be non-empty and aligned".into(),
        ));
    }
    let (mean, se): (Vec<f64>, Vec<f64>) = errors
        .iter()
        .map(|e| {
            if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
                return (f64::INFINITY, f64::INFINITY);
            }
            let k = e.len() as f64;
            let m = e.iter().sum::<f64>() / k;
            let se = if e.len() > 1 {
                (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
            } else {
                0.0
            };
            (m, se)
        })
        .unzip();
    let mut best: Option<usize> = None;
    for l in 0..grid.len() {
        if !mean[l].is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => mean[l] < mean[b] || (mean[l] == mean[b] && grid[l] > grid[b]),
        };
        if better {
            best = Some(l);
        }
    }
    let best = best
        .ok_or_else(|| Error::Convergence("no grid point has a finite validation loss".into()))?;
    let chosen = match rule {
        CvRule::Min => best,
        CvRule::OneStandardError => {
            let bound = mean[best] + se[best];
            (0..grid.len())
                .filter(|&l| mean[l] <= bound)
                .fold(best, |a, l| if grid[l] > grid[a] { l } else { a })
        }
    };
    Ok(CvSelection { mean, se, chosen })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Offsets tried for every coordinate before the sweeps start.
    pub offsets: Vec<f64>,
    /// Stop once successive sweeps move theta by less than this.
    pub tolerance: f64,
    /// Maximum number of sweeps.
    pub max_sweeps: usize,
    pub line_tolerance: f64,
    pub line_max_iter: usize,
    /// How each coordinate's minimum is bracketed before the Brent polish.
    pub line_search: LineSearch,
    /// Half-width of the window searched around the current coordinate value.
    pub line_radius: f64,
    /// Grid points in the coarse bracketing scan.
    pub line_grid: usize,
    /// First trial step of the downhill bracket.
    pub line_step: f64,
    pub refit_tolerance: f64,
    pub refit_max_iter: usize,
    /// Candidate penalties for cross-validation.
    pub lambdas: Vec<f64>,
    pub cv_rule: CvRule,
    pub folds: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            offsets: vec![-0.8, -0.4, 0.0, 0.4, 0.8],
            tolerance: 1e-3,
            max_sweeps: 30,
            line_tolerance: 1e-8,
            line_max_iter: 50,
            line_search: LineSearch::Local,
            line_radius: 1.0,
            line_grid: 11,
            line_step: 0.02,
            refit_tolerance: 1e-6,
            refit_max_iter: 500,
            lambdas: default_lambda_grid(),
            cv_rule: CvRule::OneStandardError,
            folds: 5,
            seed: 0,
        }
    }
}

/// 20 log-spaced values from 1e-4 to 1e-1.
pub fn default_lambda_grid() -> Vec<f64> {
    crate::lasso::log_grid(1e-1, 1e-3, 20)
        .into_iter()
        .rev()
        .collect()
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "max_sweeps must be at least 1".into(),
            ));
        }
        if self.offsets.is_empty() {
            return Err(Error::InvalidArgument("offsets must not be empty".into()));
        }
        if self.line_grid < 3 || !(self.line_radius > 0.0) {
            return Err(Error::InvalidArgument(
                "line search needs a grid of at least 3 points".into(),
            ));
        }
        if !(self.line_step > 0.0 && self.line_step <= self.line_radius) {
            return Err(Error::InvalidArgument(
                "line_step must lie in (0, line_radius]".into(),
            ));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidArgument(
                "lambdas must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    pub theta: Vec<f64>,
    pub support: Vec<usize>,
    pub converged: bool,
    /// Unpenalized objective at `theta`.
    pub objective: f64,
    pub lambda: f64,
    pub sweeps: usize,
    /// Penalized objective after the start scan and after each sweep.
    pub history: Vec<f64>,
}

pub fn support_of(theta: &[f64]) -> Vec<usize> {
    (0..theta.len()).filter(|&j| theta[j] != 0.0).collect()
}

/// `sum_{j >= 1} |theta_j|`.
pub fn slope_l1(theta: &[f64]) -> f64 {
    theta[1..].iter().map(|v| v.abs()).sum()
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Brent's bounded minimization of `f` on `[a, b]` starting from `x0`.
fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    x0: f64,
    fx0: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let (mut fx, mut fw, mut fv) = (fx0, fx0, fx0);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) && q != 0.0 {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = finite_or_inf(f(u));
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimizes `f` over `[center - radius, center + radius]`: a bracket around
/// a minimum is found first, then Brent's method polishes inside it.
fn line_minimize<F: FnMut(f64) -> f64>(
    f: F,
    center: f64,
    f_center: f64,
    cfg: &OptimizerConfig,
) -> Option<(f64, f64)> {
    match cfg.line_search {
        LineSearch::Local => line_minimize_local(f, center, f_center, cfg),
        LineSearch::Scan => line_minimize_scan(f, center, f_center, cfg),
    }
}

/// Downhill bracketing from `center`, growing the step by the golden ratio.
fn line_minimize_local<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    f_center: f64,
    cfg: &OptimizerConfig,
) -> Option<(f64, f64)> {
    const GROW: f64 = 1.618_033_988_749_895;
    let (lo, hi) = (center - cfg.line_radius, center + cfg.line_radius);
    if !f_center.is_finite() {
        return line_minimize_scan(f, center, f_center, cfg);
    }
    let h = cfg.line_step;
    let fp = finite_or_inf(f(center + h));
    let fm = finite_or_inf(f(center - h));
    let (a, b, x, fx) = if fp >= f_center && fm >= f_center {
        (center - h, center + h, center, f_center)
    } else {
        let dir = if fp < fm { 1.0 } else { -1.0 };
        let (mut prev, mut cur, mut fcur) = (center, center + dir * h, fp.min(fm));
        let mut step = h;
        loop {
            step *= GROW;
            let next = (cur + dir * step).clamp(lo, hi);
            if next == cur {
                break (prev.min(cur), prev.max(cur), cur, fcur);
            }
            let fnext = finite_or_inf(f(next));
            if fnext >= fcur {
                break (prev.min(next), prev.max(next), cur, fcur);
            }
            prev = cur;
            cur = next;
            fcur = fnext;
        }
    };
    let (xb, fb) = brent(&mut f, a, b, x, fx, cfg.line_tolerance, cfg.line_max_iter);
    if fb <= fx {
        Some((xb, fb))
    } else {
        Some((x, fx))
    }
}

/// Coarse grid over the whole window, then Brent inside the best grid cell.
fn line_minimize_scan<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    f_center: f64,
    cfg: &OptimizerConfig,
) -> Option<(f64, f64)> {
    let m = cfg.line_grid;
    let step = 2.0 * cfg.line_radius / (m - 1) as f64;
    let mut best = if f_center.is_finite() {
        Some((center, f_center))
    } else {
        None
    };
    for k in 0..m {
        let x = center - cfg.line_radius + k as f64 * step;
        let fx = f(x);
        if fx.is_finite() && best.is_none_or(|(_, fb)| fx < fb) {
            best = Some((x, fx));
        }
    }
    let (bx, bf) = best?;
    let (x, fx) = brent(
        &mut f,
        bx - step,
        bx + step,
        bx,
        bf,
        cfg.line_tolerance,
        cfg.line_max_iter,
    );
    if fx <= bf {
        Some((x, fx))
    } else {
        Some((bx, bf))
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = l2_norm(v);
    if norm > 0.0 && norm.is_finite() {
        Some(v.iter().map(|x| x / norm).collect())
    } else {
        None
    }
}

/// Proximal coordinate descent with per-update renormalization.
///
/// Returns the best penalized iterate seen, so the result never scores worse
/// than the (normalized) start.
pub fn coordinate_descent_sphere<O: Objective + ?Sized>(
    obj: &O,
    cfg: &OptimizerConfig,
    start: &[f64],
    lambda: f64,
) -> Result<SparseEstimate> {
    cfg.validate()?;
    let dim = obj.dim();
    if start.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: start.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let start =
        normalized(start).ok_or_else(|| Error::InvalidArgument("start must be nonzero".into()))?;
    let penalized = |theta: &[f64], value: f64| value + lambda * slope_l1(theta);

    // per-coordinate scan of starting offsets, all around the same anchor
    let near = obj.near(&start);
    let mut theta1 = start.clone();
    let mut any_finite = false;
    for j in 0..dim {
        let mut probe = start.clone();
        let mut best = (start[j], f64::INFINITY);
        for &xi in &cfg.offsets {
            probe[j] = start[j] + xi;
            let v = near(&probe);
            if v.is_finite() {
                any_finite = true;
                if v < best.1 {
                    best = (probe[j], v);
                }
            }
        }
        theta1[j] = best.0;
    }
    drop(near);
    if !any_finite {
        return Err(Error::Numeric(
            "objective is non-finite at every starting probe".into(),
        ));
    }
    let mut theta = normalized(&theta1).unwrap_or_else(|| start.clone());

    let start_value = finite_or_inf(obj.value(&start));
    let mut best_theta = start.clone();
    let mut best_pen = penalized(&start, start_value);
    let mut current = finite_or_inf(obj.value(&theta));
    let mut history = vec![penalized(&theta, current)];
    if history[0] < best_pen {
        best_pen = history[0];
        best_theta = theta.clone();
    }

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let previous = theta.clone();
        for j in 0..dim {
            let near = obj.near(&theta);
            let mut probe = theta.clone();
            let found = line_minimize(
                |x| {
                    probe[j] = x;
                    finite_or_inf(near(&probe))
                },
                theta[j],
                current,
                cfg,
            );
            let Some((x, _)) = found else { continue };
            let shrunk = if j == 0 { x } else { soft_threshold(x, lambda) };
            let mut candidate = theta.clone();
            candidate[j] = shrunk;
            if let Some(next) = normalized(&candidate) {
                theta = next;
                current = finite_or_inf(obj.value(&theta));
            }
        }
        let pen = penalized(&theta, current);
        history.push(pen);
        if pen < best_pen {
            best_pen = pen;
            best_theta = theta.clone();
        }
        let moved = l2_norm(
            &theta
                .iter()
                .zip(&previous)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if moved < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !best_pen.is_finite() {
        return Err(Error::Numeric(
            "objective is non-finite along the whole path".into(),
        ));
    }
    let objective = obj.value(&best_theta);
    Ok(SparseEstimate {
        support: support_of(&best_theta),
        theta: best_theta,
        converged,
        objective,
        lambda,
        sweeps,
        history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefitResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the support was empty and `start` was returned as is.
    pub empty_support: bool,
}

/// Minimizes the unpenalized objective over unit vectors supported on
/// `support`, by gradient descent in the tangent space with renormalization
/// and Armijo backtracking.
pub fn refit_on_support<O: Objective + ?Sized>(
    obj: &O,
    support: &[usize],
    start: &[f64],
    tolerance: f64,
    max_iter: usize,
) -> Result<RefitResult> {
    let dim = obj.dim();
    if start.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: start.len(),
        });
    }
    if support.is_empty() {
        return Ok(RefitResult {
            theta: start.to_vec(),
            objective: obj.value(start),
            converged: false,
            iterations: 0,
            empty_support: true,
        });
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= dim) {
        return Err(Error::InvalidArgument(format!(
            "support index {bad} out of range"
        )));
    }
    let mut theta = vec![0.0; dim];
    for &j in support {
        theta[j] = start[j];
    }
    theta = match normalized(&theta) {
        Some(t) => t,
        None => {
            // start vanishes on the support: take the first support axis
            let mut t = vec![0.0; dim];
            t[support[0]] = 1.0;
            t
        }
    };
    if support.len() == 1 {
        let j = support[0];
        let mut flipped = theta.clone();
        flipped[j] = -theta[j];
        let (a, b) = (
            finite_or_inf(obj.value(&theta)),
            finite_or_inf(obj.value(&flipped)),
        );
        let (theta, objective) = if b < a { (flipped, b) } else { (theta, a) };
        return Ok(RefitResult {
            theta,
            objective,
            converged: true,
            iterations: 0,
            empty_support: false,
        });
    }

    let mut f = finite_or_inf(obj.value(&theta));
    if !f.is_finite() {
        return Err(Error::Numeric(
            "objective is non-finite at the refit start".into(),
        ));
    }
    let h = 1e-6;
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let near = obj.near(&theta);
        let mut grad = vec![0.0; support.len()];
        let mut probe = theta.clone();
        for (k, &j) in support.iter().enumerate() {
            probe[j] = theta[j] + h;
            let up = near(&probe);
            probe[j] = theta[j] - h;
            let down = near(&probe);
            probe[j] = theta[j];
            grad[k] = (up - down) / (2.0 * h);
        }
        drop(near);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient during refit".into()));
        }
        let radial: f64 = support.iter().zip(&grad).map(|(&j, g)| theta[j] * g).sum();
        let tangent: Vec<f64> = support
            .iter()
            .zip(&grad)
            .map(|(&j, g)| g - radial * theta[j])
            .collect();
        let gnorm2: f64 = tangent.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = theta.clone();
            for (&j, g) in support.iter().zip(&tangent) {
                cand[j] -= step * g;
            }
            if let Some(cand) = normalized(&cand) {
                let fc = finite_or_inf(obj.value(&cand));
                if fc <= f - 1e-4 * step * gnorm2 {
                    theta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent left at machine precision
            converged = gnorm2.sqrt() < tolerance.sqrt();
            break;
        }
        step = (step * 2.0).min(1e3);
    }
    Ok(RefitResult {
        theta,
        objective: f,
        converged,
        iterations,
        empty_support: false,
    })
}

/// Penalized fit from `e_0` followed by a refit on the selected support.
pub fn fit_with_refit<O: Objective + ?Sized>(
    obj: &O,
    cfg: &OptimizerConfig,
    lambda: f64,
) -> Result<SparseEstimate> {
    let mut start = vec![0.0; obj.dim()];
    start[0] = 1.0;
    Ok(fit_with_refit_from(obj, cfg, lambda, &start)?.1)
}

/// As [`fit_with_refit`] from an arbitrary start; also returns the penalized
/// iterate before the refit.
pub fn fit_with_refit_from<O: Objective + ?Sized>(
    obj: &O,
    cfg: &OptimizerConfig,
    lambda: f64,
    start: &[f64],
) -> Result<(SparseEstimate, SparseEstimate)> {
    let est = coordinate_descent_sphere(obj, cfg, start, lambda)?;
    let refit = refit_on_support(
        obj,
        &est.support,
        &est.theta,
        cfg.refit_tolerance,
        cfg.refit_max_iter,
    )?;
    let theta = if refit.objective <= est.objective {
        refit.theta
    } else {
        est.theta.clone()
    };
    let out = SparseEstimate {
        support: support_of(&theta),
        objective: obj.value(&theta),
        theta,
        converged: est.converged,
        lambda,
        sweeps: est.sweeps,
        history: est.history.clone(),
    };
    Ok((est, out))
}

/// Cross-validation scores of each candidate penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
    /// Mean held-out loss per lambda.
    pub scores: Vec<f64>,
    /// Standard error of each mean over folds.
    pub se: Vec<f64>,
    pub chosen: f64,
}

/// K-fold choice of the penalty. Each training fit is refitted on its
/// support before scoring on the held-out fold with the weighted loss.
pub fn cross_validate_lambda(
    ds: &Dataset,
    q: &QModel,
    tau: f64,
    cfg: &OptimizerConfig,
) -> Result<LambdaPath> {
    cfg.validate()?;
    if cfg.lambdas.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if cfg.lambdas.len() == 1 {
        return Ok(LambdaPath {
            lambdas: cfg.lambdas.clone(),
            scores: vec![f64::NAN],
            se: vec![f64::NAN],
            chosen: cfg.lambdas[0],
        });
    }
    let folds = split_indices(ds.n(), cfg.folds, cfg.seed)?;
    let contexts = folds
        .iter()
        .map(|f| {
            Ok((
                LossContext::new(&ds.subset(&f.train), q, tau, Weighting::Weighted)?,
                LossContext::new(&ds.subset(&f.validation), q, tau, Weighting::Weighted)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    // each fold walks the grid from the largest penalty down, warm-starting
    // every fit at the previous penalized solution
    let mut order: Vec<usize> = (0..cfg.lambdas.len()).collect();
    order.sort_by(|&a, &b| cfg.lambdas[b].total_cmp(&cfg.lambdas[a]));
    let per_fold = contexts
        .par_iter()
        .map(|(train, val)| {
            let mut start = vec![0.0; train.dim()];
            start[0] = 1.0;
            let mut out = vec![0.0; cfg.lambdas.len()];
            for &l in &order {
                let (penalized, est) = fit_with_refit_from(train, cfg, cfg.lambdas[l], &start)?;
                out[l] = val.value(&est.theta);
                start = penalized.theta;
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let errors: Vec<Vec<f64>> = (0..cfg.lambdas.len())
        .map(|l| per_fold.iter().map(|f| f[l]).collect())
        .collect();
    let sel = cv_select(&cfg.lambdas, &errors, cfg.cv_rule)?;
    Ok(LambdaPath {
        lambdas: cfg.lambdas.clone(),
        scores: sel.mean,
        se: sel.se,
        chosen: cfg.lambdas[sel.chosen],
    })
}

/// Sparse estimate of the weighted augmented loss at `q` with the penalty
/// chosen by cross-validation.
pub fn estimate_sparse(
    ds: &Dataset,
    q: &QModel,
    tau: f64,
    cfg: &OptimizerConfig,
) -> Result<(SparseEstimate, LambdaPath)> {
    let path = cross_validate_lambda(ds, q, tau, cfg)?;
    let est = estimate_sparse_at(ds, q, tau, cfg, path.chosen)?;
    Ok((est, path))
}

/// As [`estimate_sparse`] at a fixed penalty.
pub fn estimate_sparse_at(
    ds: &Dataset,
    q: &QModel,
    tau: f64,
    cfg: &OptimizerConfig,
    lambda: f64,
) -> Result<SparseEstimate> {
    let ctx = LossContext::new(ds, q, tau, Weighting::Weighted)?;
    fit_with_refit(&ctx, cfg, lambda)
}

/// The initial estimator: [`estimate_sparse`] with the zero Q-model.
pub fn estimate_initial(
    ds: &Dataset,
    tau: f64,
    cfg: &OptimizerConfig,
) -> Result<(SparseEstimate, LambdaPath)> {
    let q = QModel::zero(crate::nuisance::BasisSpec::linear(ds.d()), ds.horizon());
    estimate_sparse(ds, &q, tau, cfg)
}

/// Angle in degrees between two vectors.
pub fn angle_degrees(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (l2_norm(a) * l2_norm(b)))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// `sgn(theta_0)` of an estimate.
pub fn intercept_sign(theta: &[f64]) -> f64 {
    sgn(theta[0])
}
