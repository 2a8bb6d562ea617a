//! End-to-end estimation and inference on one dataset.
//!
//! Estimation runs the initial fit with the zero Q-model, fits the chosen
//! Q-model, then refits the policy with it. Inference tunes `lambda_w`,
//! computes the one-step estimates and optionally bootstraps them.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::importance::compute_ratios;
use crate::inference::derivatives::sphere_derivatives;
use crate::inference::{
    bootstrap_inference, lambda_w_grid, one_step_from_derivatives, tune_lambda_w, with_bootstrap,
    BootstrapConfig, BootstrapResult, LambdaWChoice, OneStepResult,
};
use crate::loss::{LossContext, Weighting};
use crate::nuisance::{
    fit_q_regression, fit_q_variance_min, BasisSpec, QFitConfig, QModel, QVariant,
};
use crate::optimizer::{
    estimate_initial, estimate_sparse, LambdaPath, OptimizerConfig, SparseEstimate,
};
use crate::policy::PolicyParams;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tau: f64,
    pub q_variant: QVariant,
    pub optimizer: OptimizerConfig,
    pub q_fit: QFitConfig,
    pub lambda_w_folds: usize,
    /// Smallest `lambda_w` candidate relative to the largest.
    pub lambda_w_ratio: f64,
    pub lambda_w_count: usize,
    /// Bootstrap replicates; 0 skips the bootstrap.
    pub bootstrap: usize,
    pub alpha: f64,
    /// Root of every seed used by the pipeline.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau: 0.1,
            q_variant: QVariant::Regression,
            optimizer: OptimizerConfig::default(),
            q_fit: QFitConfig::default(),
            lambda_w_folds: 5,
            lambda_w_ratio: 1e-2,
            lambda_w_count: 10,
            bootstrap: 100,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.bootstrap == 1 {
            return Err(Error::InvalidArgument(
                "bootstrap needs 0 or at least 2 replicates".into(),
            ));
        }
        if self.lambda_w_folds < 2 || self.lambda_w_count == 0 {
            return Err(Error::InvalidArgument(
                "lambda_w tuning needs 2 folds and a non-empty grid".into(),
            ));
        }
        if !(self.lambda_w_ratio > 0.0 && self.lambda_w_ratio <= 1.0) {
            return Err(Error::InvalidArgument(
                "lambda_w_ratio must lie in (0, 1]".into(),
            ));
        }
        self.optimizer.validate()
    }

    fn optimizer_for(&self, component: &str) -> OptimizerConfig {
        OptimizerConfig {
            seed: derive_seed(self.seed, component, 0, 0),
            ..self.optimizer.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub initial: SparseEstimate,
    pub initial_path: LambdaPath,
    pub q: QModel,
    pub estimate: SparseEstimate,
    pub path: LambdaPath,
}

/// Initial estimate, Q-model and final sparse estimate.
pub fn run_estimate(ds: &Dataset, cfg: &PipelineConfig) -> Result<EstimateOutput> {
    cfg.validate()?;
    let (initial, initial_path) = estimate_initial(ds, cfg.tau, &cfg.optimizer_for("cv-initial"))?;
    let basis = BasisSpec::linear(ds.d());
    let q_cfg = QFitConfig {
        seed: derive_seed(cfg.seed, "q-fit", 0, 0),
        ..cfg.q_fit.clone()
    };
    let q = match cfg.q_variant {
        QVariant::Zero => QModel::zero(basis, ds.horizon()),
        QVariant::Regression => fit_q_regression(ds, &basis, &q_cfg)?,
        QVariant::VarianceMin => {
            let pilot = PolicyParams::new(initial.theta.clone(), cfg.tau)?;
            let ratios = compute_ratios(&pilot, ds);
            fit_q_variance_min(ds, &basis, &pilot, &ratios, &q_cfg)?
        }
    };
    let (estimate, path) = if cfg.q_variant == QVariant::Zero {
        (initial.clone(), initial_path.clone())
    } else {
        estimate_sparse(ds, &q, cfg.tau, &cfg.optimizer_for("cv-final"))?
    };
    Ok(EstimateOutput {
        initial,
        initial_path,
        q,
        estimate,
        path,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutput {
    pub lambda_w: LambdaWChoice,
    pub results: Vec<OneStepResult>,
    pub bootstrap: Option<BootstrapResult>,
}

impl InferenceOutput {
    /// `(theta_hat_0, theta_tilde_1, ..., theta_tilde_d)` projected back onto the sphere.
    pub fn one_step_theta(&self, intercept: f64) -> Result<Vec<f64>> {
        let raw: Vec<f64> = std::iter::once(intercept)
            .chain(self.results.iter().map(|r| r.theta_tilde))
            .collect();
        crate::policy::normalize_to_sphere(&raw)
    }
}

/// `lambda_w` tuning, one-step estimates for every slope and, when
/// configured, bootstrap intervals at the frozen penalties.
pub fn run_inference(
    ds: &Dataset,
    est: &EstimateOutput,
    cfg: &PipelineConfig,
) -> Result<InferenceOutput> {
    cfg.validate()?;
    let theta = &est.estimate.theta;
    let ctx = LossContext::new(ds, &est.q, cfg.tau, Weighting::Weighted)?;
    let der = sphere_derivatives(&ctx, theta, ds.horizon())?;
    let grid = lambda_w_grid(&der.hessian, cfg.lambda_w_ratio, cfg.lambda_w_count);
    let choice = tune_lambda_w(
        ds,
        theta,
        &est.q,
        cfg.tau,
        cfg.lambda_w_folds,
        &grid,
        derive_seed(cfg.seed, "cv-lambda-w", 0, 0),
    )?;
    let mut lambda_w = choice.chosen;
    let results = match one_step_from_derivatives(theta, &der, lambda_w, cfg.alpha) {
        Err(Error::DantzigInfeasible { min_feasible, .. }) => {
            log::warn!(
                "lambda_w {lambda_w:e} infeasible on the full sample; using {min_feasible:e}"
            );
            lambda_w = min_feasible * (1.0 + 1e-9) + 1e-12;
            one_step_from_derivatives(theta, &der, lambda_w, cfg.alpha)?
        }
        other => other?,
    };
    if cfg.bootstrap == 0 {
        return Ok(InferenceOutput {
            lambda_w: choice,
            results,
            bootstrap: None,
        });
    }
    let boot_cfg = BootstrapConfig {
        replicates: cfg.bootstrap,
        alpha: cfg.alpha,
        seed: derive_seed(cfg.seed, "bootstrap", 0, 0),
        identity_resample: false,
    };
    let boot = bootstrap_inference(
        ds,
        &est.q,
        cfg.tau,
        &cfg.optimizer_for("bootstrap-fit"),
        est.path.chosen,
        lambda_w,
        &boot_cfg,
    )?;
    let results = with_bootstrap(results, &boot);
    Ok(InferenceOutput {
        lambda_w: choice,
        results,
        bootstrap: Some(boot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, Scenario, ScenarioSpec};

    fn small() -> (Dataset, PipelineConfig) {
        let ds = generate(&ScenarioSpec::new(Scenario::Two, 100, 4, 1, 3).unwrap()).unwrap();
        let cfg = PipelineConfig {
            optimizer: OptimizerConfig {
                lambdas: vec![0.1, 0.03],
                folds: 2,
                ..Default::default()
            },
            q_fit: QFitConfig {
                n_lambdas: 5,
                folds: 2,
                ..Default::default()
            },
            lambda_w_folds: 2,
            lambda_w_count: 3,
            bootstrap: 2,
            ..Default::default()
        };
        (ds, cfg)
    }

    #[test]
    fn zero_variant_returns_the_initial_estimate() {
        let (ds, mut cfg) = small();
        cfg.q_variant = QVariant::Zero;
        let out = run_estimate(&ds, &cfg).unwrap();
        assert_eq!(out.estimate, out.initial);
        assert!(out.q.is_zero());
    }

    #[test]
    fn end_to_end_is_deterministic() {
        let (ds, cfg) = small();
        let a = run_estimate(&ds, &cfg).unwrap();
        let b = run_estimate(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        let ia = run_inference(&ds, &a, &cfg).unwrap();
        let ib = run_inference(&ds, &a, &cfg).unwrap();
        assert_eq!(ia, ib);
        assert_eq!(ia.results.len(), 4);
        assert!(ia.results.iter().all(|r| r.bootstrap_ci.is_some()));
        let theta = ia.one_step_theta(a.estimate.theta[0]).unwrap();
        assert!((theta.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let (_, mut cfg) = small();
        cfg.bootstrap = 1;
        assert!(cfg.validate().is_err());
        cfg.bootstrap = 0;
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
    }
}
