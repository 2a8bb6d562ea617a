//! Working models for the stage-wise reward regressions `Q_t(x, a)` and the
//! policy mixtures `U_t(x) = sum_a pi(a|x) Q_t(x, a)` that augment the
//! value estimator.
//!
//! Two fitters are provided. The regression fitter is a lasso of the stage
//! reward on `Phi(x, a) = [phi(x), a * phi(x)]`. The variance-minimizing
//! fitter regresses the self-normalized weighted reward on the centered
//! design `(rho/wbar) Phi(x, A) - sum_a pi(a|x) Phi(x, a)` at a fixed
//! pilot policy. Both select lambda by k-fold cross-validation and refit
//! unpenalized least squares on the selected support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, split_indices, Action, Dataset};
use crate::error::{Error, Result};
use crate::importance::RatioTable;
use crate::lasso::{log_grid, Design, GramLasso};
use crate::optimizer::{cv_select, CvRule};
use crate::policy::{index_of, prob_from_index, PolicyParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Linear,
    Polynomial2,
}

/// The feature map `phi`, always led by an intercept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub d: usize,
}

impl BasisSpec {
    pub fn linear(d: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Linear,
            d,
        }
    }

    /// Output dimension `d'` of `phi`.
    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::Linear => 1 + self.d,
            BasisKind::Polynomial2 => 1 + self.d + self.d * (self.d + 1) / 2,
        }
    }

    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dim());
        out.push(1.0);
        out.extend_from_slice(x);
        if self.kind == BasisKind::Polynomial2 {
            for j in 0..self.d {
                for k in j..self.d {
                    out.push(x[j] * x[k]);
                }
            }
        }
        Ok(out)
    }
}

/// `[phi(x), a * phi(x)]`.
pub fn build_features(basis: &BasisSpec, x: &[f64], a: Action) -> Result<Vec<f64>> {
    let phi = basis.phi(x)?;
    let s = a.sign();
    let mut out = phi.clone();
    out.extend(phi.iter().map(|v| s * v));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QVariant {
    /// `Q = 0`: no augmentation.
    Zero,
    /// Lasso of the stage reward.
    Regression,
    /// Lasso minimizing the second moment of the stage value estimate.
    VarianceMin,
}

impl QVariant {
    pub fn label(self) -> &'static str {
        match self {
            QVariant::Zero => "q0",
            QVariant::Regression => "q1",
            QVariant::VarianceMin => "q2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "q0" | "zero" => Ok(QVariant::Zero),
            "q1" | "regression" => Ok(QVariant::Regression),
            "q2" | "variance-min" => Ok(QVariant::VarianceMin),
            other => Err(Error::InvalidArgument(format!(
                "unknown Q variant {other:?}"
            ))),
        }
    }
}

/// Per-stage linear Q-models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    pub basis: BasisSpec,
    pub variant: QVariant,
    /// One coefficient vector of length `2 d'` per stage.
    pub beta: Vec<Vec<f64>>,
    /// Penalty chosen by cross-validation per stage (0 for the zero model).
    pub lambdas: Vec<f64>,
}

impl QModel {
    pub fn zero(basis: BasisSpec, horizon: usize) -> Self {
        QModel {
            basis,
            variant: QVariant::Zero,
            beta: vec![vec![0.0; 2 * basis.dim()]; horizon],
            lambdas: vec![0.0; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.beta.len()
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    /// `(Q_t(x, +1), Q_t(x, -1))` for a 0-based stage index.
    pub fn predict_pair(&self, stage: usize, x: &[f64]) -> Result<(f64, f64)> {
        if self.is_zero() {
            return Ok((0.0, 0.0));
        }
        let phi = self.basis.phi(x)?;
        let beta = self
            .beta
            .get(stage)
            .ok_or_else(|| Error::InvalidArgument(format!("stage {stage} beyond horizon")))?;
        let k = phi.len();
        let (mut main, mut inter) = (0.0, 0.0);
        for (j, v) in phi.iter().enumerate() {
            main += v * beta[j];
            inter += v * beta[k + j];
        }
        Ok((main + inter, main - inter))
    }

    /// `Phi(x, a)' beta_t` for a 0-based stage index.
    pub fn predict_q(&self, stage: usize, x: &[f64], a: Action) -> Result<f64> {
        let (plus, minus) = self.predict_pair(stage, x)?;
        Ok(match a {
            Action::Plus => plus,
            Action::Minus => minus,
        })
    }

    /// `sum_a pi(a|x) Q_t(x, a)` under policy `p`.
    pub fn predict_u(&self, p: &PolicyParams, stage: usize, x: &[f64]) -> Result<f64> {
        let (plus, minus) = self.predict_pair(stage, x)?;
        let pp = p.action_probability(x, Action::Plus)?;
        Ok(mixture(pp, plus, minus))
    }

    pub fn to_json(&self) -> String {
        let stages: Vec<String> = self
            .beta
            .iter()
            .map(|b| {
                format!(
                    "[{}]",
                    b.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(", ")
                )
            })
            .collect();
        let lambdas: Vec<String> = self.lambdas.iter().map(|&v| fmt_f64(v)).collect();
        format!(
            "{{\"basis\": {}, \"variant\": \"{}\", \"lambdas\": [{}], \"beta\": [{}]}}\n",
            serde_json::to_string(&self.basis).unwrap_or_default(),
            match self.variant {
                QVariant::Zero => "zero",
                QVariant::Regression => "regression",
                QVariant::VarianceMin => "variance-min",
            },
            lambdas.join(", "),
            stages.join(", ")
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let q: QModel = serde_json::from_str(text)?;
        let width = 2 * q.basis.dim();
        if q.beta.iter().any(|b| b.len() != width) {
            return Err(Error::Schema(format!(
                "every stage needs {width} coefficients"
            )));
        }
        Ok(q)
    }
}

/// `p Q(+1) + (1 - p) Q(-1)`.
pub fn mixture(p_plus: f64, q_plus: f64, q_minus: f64) -> f64 {
    p_plus * q_plus + (1.0 - p_plus) * q_minus
}

/// Settings shared by both fitters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QFitConfig {
    pub n_lambdas: usize,
    pub lambda_ratio: f64,
    /// Explicit grid; overrides `n_lambdas`/`lambda_ratio` when non-empty.
    pub lambdas: Vec<f64>,
    pub folds: usize,
    pub cv_rule: CvRule,
    pub seed: u64,
}

impl Default for QFitConfig {
    fn default() -> Self {
        QFitConfig {
            n_lambdas: 50,
            lambda_ratio: 1e-3,
            lambdas: Vec::new(),
            folds: 5,
            cv_rule: CvRule::Min,
            seed: 0,
        }
    }
}

/// A single-stage penalized regression problem with its chosen solution.
#[derive(Clone, Debug)]
pub struct StageFit {
    pub lambda: f64,
    pub penalized: Vec<f64>,
    pub refit: Vec<f64>,
}

/// Unpenalized least squares restricted to `support`; other coordinates are 0.
pub fn refit_least_squares(design: &Design, y: &[f64], support: &[usize]) -> Vec<f64> {
    let p = design.ncols();
    let mut beta = vec![0.0; p];
    if support.is_empty() {
        return beta;
    }
    let n = design.nrows();
    let x = DMatrix::from_fn(n, support.len(), |i, k| design.get(i, support[k]));
    let yv = DVector::from_column_slice(y);
    let svd = x.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    if let Ok(sol) = svd.solve(&yv, tol) {
        for (k, &j) in support.iter().enumerate() {
            beta[j] = sol[k];
        }
    }
    beta
}

fn penalty_factors(p: usize) -> Vec<f64> {
    // The intercept of the main-effect block is unpenalized.
    let mut f = vec![1.0; p];
    f[0] = 0.0;
    f
}

/// Cross-validated lasso followed by a refit on the support.
pub fn cv_lasso_refit(
    design: &Design,
    y: &[f64],
    cfg: &QFitConfig,
    stage_seed: u64,
) -> Result<StageFit> {
    let n = design.nrows();
    let p = design.ncols();
    let factors = penalty_factors(p);
    let grid = if cfg.lambdas.is_empty() {
        let mut probe = crate::lasso::LassoProblem::new(design.clone(), y.to_vec(), 0.0);
        probe.penalty_factors = factors.clone();
        let lmax = probe.lambda_max();
        if lmax > 0.0 {
            log_grid(lmax, cfg.lambda_ratio, cfg.n_lambdas)
        } else {
            vec![0.0]
        }
    } else {
        let mut g = cfg.lambdas.clone();
        g.sort_by(|a, b| b.total_cmp(a));
        g
    };

    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let folds = split_indices(n, cfg.folds.min(n), stage_seed)?;
        let mut err = vec![Vec::with_capacity(folds.len()); grid.len()];
        for fold in &folds {
            let train = design.select_rows(&fold.train);
            let ytr: Vec<f64> = fold.train.iter().map(|&i| y[i]).collect();
            let val = design.select_rows(&fold.validation);
            let yval: Vec<f64> = fold.validation.iter().map(|&i| y[i]).collect();
            let gram = GramLasso::new(&train, &ytr)?;
            let mut warm: Option<Vec<f64>> = None;
            for (k, &lam) in grid.iter().enumerate() {
                let fit = gram.solve(lam, &factors, warm.as_deref(), 100_000, 1e-8)?;
                err[k].push(crate::lasso::mse(&val, &yval, &fit.beta));
                warm = Some(fit.beta);
            }
        }
        grid[cv_select(&grid, &err, cfg.cv_rule)?.chosen]
    };

    let gram = GramLasso::new(design, y)?;
    let penalized = gram.solve(lambda, &factors, None, 100_000, 1e-8)?.beta;
    let support: Vec<usize> = (0..p).filter(|&j| penalized[j] != 0.0).collect();
    let refit = refit_least_squares(design, y, &support);
    Ok(StageFit {
        lambda,
        penalized,
        refit,
    })
}

/// Design and response of the reward regression at a 0-based stage.
pub fn regression_problem(
    ds: &Dataset,
    basis: &BasisSpec,
    stage: usize,
) -> Result<(Design, Vec<f64>)> {
    let mut rows = Vec::with_capacity(ds.n());
    let mut y = Vec::with_capacity(ds.n());
    for traj in ds.trajectories() {
        let s = &traj.stages[stage];
        rows.push(build_features(basis, &s.x, s.a)?);
        y.push(s.r);
    }
    Ok((Design::from_rows(&rows)?, y))
}

/// Design and response of the variance-minimizing regression at a 0-based stage.
pub fn variance_min_problem(
    ds: &Dataset,
    basis: &BasisSpec,
    pilot: &PolicyParams,
    ratios: &RatioTable,
    stage: usize,
) -> Result<(Design, Vec<f64>)> {
    let k = basis.dim();
    let mut rows = Vec::with_capacity(ds.n());
    let mut y = Vec::with_capacity(ds.n());
    for (i, traj) in ds.trajectories().iter().enumerate() {
        let s = &traj.stages[stage];
        let w = ratios.normalized(i, stage + 1);
        let phi = basis.phi(&s.x)?;
        let pp = prob_from_index(index_of(pilot.theta(), &s.x), pilot.tau(), Action::Plus);
        // sum_a pi(a|x) Phi(x, a) = [phi, (2 pi(+1) - 1) phi]
        let centered_sign = 2.0 * pp - 1.0;
        let a = s.a.sign();
        let mut row = Vec::with_capacity(2 * k);
        row.extend(phi.iter().map(|v| w * v - v));
        row.extend(phi.iter().map(|v| w * a * v - centered_sign * v));
        rows.push(row);
        y.push(w * s.r);
    }
    Ok((Design::from_rows(&rows)?, y))
}

fn stage_seed(seed: u64, variant: QVariant, stage: usize) -> u64 {
    crate::rng::derive_seed(seed, variant.label(), stage as u64, 0)
}

/// Reward-regression Q-models, one cross-validated lasso per stage.
pub fn fit_q_regression(ds: &Dataset, basis: &BasisSpec, cfg: &QFitConfig) -> Result<QModel> {
    let mut beta = Vec::with_capacity(ds.horizon());
    let mut lambdas = Vec::with_capacity(ds.horizon());
    for t in 0..ds.horizon() {
        let (design, y) = regression_problem(ds, basis, t)?;
        let fit = cv_lasso_refit(
            &design,
            &y,
            cfg,
            stage_seed(cfg.seed, QVariant::Regression, t),
        )?;
        beta.push(fit.refit);
        lambdas.push(fit.lambda);
    }
    Ok(QModel {
        basis: *basis,
        variant: QVariant::Regression,
        beta,
        lambdas,
    })
}

/// Variance-minimizing Q-models at the pilot policy and its frozen ratios.
pub fn fit_q_variance_min(
    ds: &Dataset,
    basis: &BasisSpec,
    pilot: &PolicyParams,
    ratios: &RatioTable,
    cfg: &QFitConfig,
) -> Result<QModel> {
    if ratios.n() != ds.n() || ratios.horizon() != ds.horizon() {
        return Err(Error::InvalidArgument(
            "ratio table does not match dataset".into(),
        ));
    }
    let mut beta = Vec::with_capacity(ds.horizon());
    let mut lambdas = Vec::with_capacity(ds.horizon());
    for t in 0..ds.horizon() {
        let (design, y) = variance_min_problem(ds, basis, pilot, ratios, t)?;
        let fit = cv_lasso_refit(
            &design,
            &y,
            cfg,
            stage_seed(cfg.seed, QVariant::VarianceMin, t),
        )?;
        beta.push(fit.refit);
        lambdas.push(fit.lambda);
    }
    Ok(QModel {
        basis: *basis,
        variant: QVariant::VarianceMin,
        beta,
        lambdas,
    })
}
