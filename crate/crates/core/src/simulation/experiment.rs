//! Replication harness: repeat generate, estimate and infer, then summarize
//! values, MADs and coverage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::quantile;
use crate::pipeline::{run_estimate, run_inference, PipelineConfig};
use crate::policy::PolicyParams;
use crate::rng::derive_seed;
use crate::simulation::scenario::{generate, mc_value, Scenario, ScenarioSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Data-generating setting; its seed is replaced per replication.
    pub spec: ScenarioSpec,
    pub pipeline: PipelineConfig,
    pub replications: usize,
    /// Rollouts per Monte Carlo value.
    pub n_test: usize,
    /// Reference parameter `(theta_0, ..., theta_d)` for MAD and coverage.
    pub theta_star: Vec<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.pipeline.validate()?;
        if self.replications == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument(
                "replications and n_test must be positive".into(),
            ));
        }
        if self.theta_star.len() != self.spec.d + 1 {
            return Err(Error::Dimension {
                expected: self.spec.d + 1,
                got: self.theta_star.len(),
            });
        }
        Ok(())
    }
}

/// Reference optimum for the scenario, zero-padded to `d` slopes.
pub fn reference_theta(scenario: Scenario, horizon: usize, d: usize) -> Vec<f64> {
    let head: [f64; 3] = match (scenario, horizon) {
        (Scenario::One, 1) => [-0.39, 0.68, -0.62],
        (Scenario::One, _) => [-0.45, 0.53, -0.72],
        (Scenario::Two, _) => [-0.57, 0.58, 0.58],
    };
    let mut theta = vec![0.0; d + 1];
    for (t, h) in theta.iter_mut().zip(head) {
        *t = h;
    }
    theta
}

/// Everything one replication contributes to the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub train_value: f64,
    pub value_initial: f64,
    pub value_hat: f64,
    pub value_tilde: f64,
    pub theta_hat: Vec<f64>,
    /// One-step slopes.
    pub theta_tilde: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Estimated MAD of each one-step slope.
    pub estimated_mad: Vec<f64>,
    pub lambda_theta: f64,
    pub lambda_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub outcome: Option<ReplicationOutcome>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        if v.is_empty() {
            return MeanSd {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

/// Statistics for the three coordinate groups `theta_1`, `theta_2` and
/// the average over `theta_3..theta_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub theta1: f64,
    pub theta2: f64,
    pub rest: f64,
}

impl Groups {
    fn from_slopes(v: &[f64]) -> Self {
        let rest = if v.len() > 2 {
            v[2..].iter().sum::<f64>() / (v.len() - 2) as f64
        } else {
            f64::NAN
        };
        Groups {
            theta1: v[0],
            theta2: v.get(1).copied().unwrap_or(f64::NAN),
            rest,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: u8,
    pub n: usize,
    pub d: usize,
    pub horizon: usize,
    pub q_variant: String,
    pub bootstrap: usize,
    pub alpha: f64,
    pub replications: usize,
    pub completed: usize,
    pub failed: usize,
    pub train_value: MeanSd,
    pub value_initial: MeanSd,
    pub value_hat: MeanSd,
    pub value_tilde: MeanSd,
    pub mad_estimated: Groups,
    pub mad_empirical: Groups,
    pub coverage: Groups,
}

/// Column names of [`ExperimentReport::to_csv`].
pub const REPORT_COLUMNS: [&str; 27] = [
    "scenario",
    "n",
    "d",
    "T",
    "q_variant",
    "B",
    "alpha",
    "replications",
    "completed",
    "failed",
    "train_mean",
    "train_sd",
    "value_initial_mean",
    "value_initial_sd",
    "value_hat_mean",
    "value_hat_sd",
    "value_tilde_mean",
    "value_tilde_sd",
    "mad_est_theta1",
    "mad_est_theta2",
    "mad_est_theta3_d",
    "mad_emp_theta1",
    "mad_emp_theta2",
    "mad_emp_theta3_d",
    "cp_theta1",
    "cp_theta2",
    "cp_theta3_d",
];

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let f = |v: f64| format!("{v}");
        let row = [
            self.scenario.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            self.horizon.to_string(),
            self.q_variant.clone(),
            self.bootstrap.to_string(),
            f(self.alpha),
            self.replications.to_string(),
            self.completed.to_string(),
            self.failed.to_string(),
            f(self.train_value.mean),
            f(self.train_value.sd),
            f(self.value_initial.mean),
            f(self.value_initial.sd),
            f(self.value_hat.mean),
            f(self.value_hat.sd),
            f(self.value_tilde.mean),
            f(self.value_tilde.sd),
            f(self.mad_estimated.theta1),
            f(self.mad_estimated.theta2),
            f(self.mad_estimated.rest),
            f(self.mad_empirical.theta1),
            f(self.mad_empirical.theta2),
            f(self.mad_empirical.rest),
            f(self.coverage.theta1),
            f(self.coverage.theta2),
            f(self.coverage.rest),
        ];
        format!("{}\n{}\n", REPORT_COLUMNS.join(","), row.join(","))
    }

    /// Value, MAD and CP blocks laid out as a summary table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Scenario {}, T = {}, n = {}, d = {}, Q = {}, B = {}, {}/{} replications",
            self.scenario,
            self.horizon,
            self.n,
            self.d,
            self.q_variant,
            self.bootstrap,
            self.completed,
            self.replications
        );
        let v = |m: MeanSd| format!("{:.4} ({:.4})", m.mean, m.sd);
        let _ = writeln!(s, "V(theta)  Train          {}", v(self.train_value));
        let _ = writeln!(s, "          initial        {}", v(self.value_initial));
        let _ = writeln!(s, "          theta_hat      {}", v(self.value_hat));
        let _ = writeln!(s, "          theta_tilde    {}", v(self.value_tilde));
        let _ = writeln!(s, "                   theta_1  theta_2  theta_3:d");
        let g = |g: Groups| format!("{:>8.4} {:>8.4} {:>8.4}", g.theta1, g.theta2, g.rest);
        let _ = writeln!(s, "MAD  Estimated    {}", g(self.mad_estimated));
        let _ = writeln!(s, "     Empirical    {}", g(self.mad_empirical));
        let p = |x: f64| format!("{:>7.0}%", 100.0 * x);
        let _ = writeln!(
            s,
            "CP                {} {} {}",
            p(self.coverage.theta1),
            p(self.coverage.theta2),
            p(self.coverage.rest)
        );
        s
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    quantile(v, 0.5)
}

/// Median absolute deviation of `v` about `center`.
fn mad_about(v: &[f64], center: f64) -> f64 {
    let mut dev: Vec<f64> = v.iter().map(|x| (x - center).abs()).collect();
    median(&mut dev)
}

/// One full replication with the given seed.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationOutcome> {
    let seed = derive_seed(cfg.seed, "replication", rep as u64, 0);
    let spec = cfg.spec.with_seed(derive_seed(seed, "data", 0, 0));
    let ds = generate(&spec)?;
    let pipe = PipelineConfig {
        seed: derive_seed(seed, "pipeline", 0, 0),
        ..cfg.pipeline.clone()
    };
    let est = run_estimate(&ds, &pipe)?;
    let inf = run_inference(&ds, &est, &pipe)?;
    let tau = pipe.tau;
    let mc_seed = derive_seed(seed, "mc", 0, 0);
    let value = |theta: &[f64]| -> Result<f64> {
        Ok(mc_value(
            &PolicyParams::new(theta.to_vec(), tau)?,
            &cfg.spec,
            cfg.n_test,
            mc_seed,
        )?
        .mean)
    };
    let tilde_theta = inf.one_step_theta(est.estimate.theta[0])?;
    let n = ds.n() as f64;
    let (intervals, estimated_mad) = match &inf.bootstrap {
        Some(boot) => {
            let mad = (0..inf.results.len())
                .map(|j| {
                    let mut col: Vec<f64> = boot.replicates.iter().map(|r| r[j]).collect();
                    let m = median(&mut col);
                    mad_about(&col, m)
                })
                .collect();
            (
                inf.results
                    .iter()
                    .map(|r| r.bootstrap_ci.unwrap_or((f64::NAN, f64::NAN)))
                    .collect(),
                mad,
            )
        }
        None => (
            inf.results
                .iter()
                .map(|r| r.asymptotic_ci.unwrap_or((f64::NAN, f64::NAN)))
                .collect(),
            inf.results
                .iter()
                .map(|r| (r.sigma_s_hat.sqrt() / (n.sqrt() * r.info.abs())) / 1.4826)
                .collect(),
        ),
    };
    Ok(ReplicationOutcome {
        train_value: ds.mean_total_reward(),
        value_initial: value(&est.initial.theta)?,
        value_hat: value(&est.estimate.theta)?,
        value_tilde: value(&tilde_theta)?,
        theta_hat: est.estimate.theta.clone(),
        theta_tilde: inf.results.iter().map(|r| r.theta_tilde).collect(),
        intervals,
        estimated_mad,
        lambda_theta: est.path.chosen,
        lambda_w: inf.results.first().map_or(f64::NAN, |r| r.lambda_w),
    })
}

/// Aggregates replication records, ordered by replicate index.
pub fn summarize(cfg: &ExperimentConfig, records: &[ReplicationRecord]) -> ExperimentReport {
    let mut sorted: Vec<&ReplicationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.rep);
    let ok: Vec<&ReplicationOutcome> = sorted.iter().filter_map(|r| r.outcome.as_ref()).collect();
    let d = cfg.spec.d;
    let col =
        |f: &dyn Fn(&ReplicationOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<f64>>();
    let nan_groups = Groups {
        theta1: f64::NAN,
        theta2: f64::NAN,
        rest: f64::NAN,
    };
    let (mad_estimated, mad_empirical, coverage) = if ok.is_empty() {
        (nan_groups, nan_groups, nan_groups)
    } else {
        let k = ok.len() as f64;
        let est: Vec<f64> = (0..d)
            .map(|j| ok.iter().map(|o| o.estimated_mad[j]).sum::<f64>() / k)
            .collect();
        let emp: Vec<f64> = (0..d)
            .map(|j| {
                mad_about(
                    &ok.iter().map(|o| o.theta_tilde[j]).collect::<Vec<_>>(),
                    cfg.theta_star[j + 1],
                )
            })
            .collect();
        let cp: Vec<f64> = (0..d)
            .map(|j| {
                let t = cfg.theta_star[j + 1];
                ok.iter()
                    .filter(|o| o.intervals[j].0 <= t && t <= o.intervals[j].1)
                    .count() as f64
                    / k
            })
            .collect();
        (
            Groups::from_slopes(&est),
            Groups::from_slopes(&emp),
            Groups::from_slopes(&cp),
        )
    };
    ExperimentReport {
        scenario: cfg.spec.scenario.number(),
        n: cfg.spec.n,
        d,
        horizon: cfg.spec.horizon,
        q_variant: cfg.pipeline.q_variant.label().to_string(),
        bootstrap: cfg.pipeline.bootstrap,
        alpha: cfg.pipeline.alpha,
        replications: cfg.replications,
        completed: ok.len(),
        failed: sorted.len() - ok.len(),
        train_value: MeanSd::of(&col(&|o| o.train_value)),
        value_initial: MeanSd::of(&col(&|o| o.value_initial)),
        value_hat: MeanSd::of(&col(&|o| o.value_hat)),
        value_tilde: MeanSd::of(&col(&|o| o.value_tilde)),
        mad_estimated,
        mad_empirical,
        coverage,
    }
}

fn read_checkpoint(path: &Path, replications: usize) -> Result<BTreeMap<usize, ReplicationRecord>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is recomputed
        let Ok(rec) = serde_json::from_str::<ReplicationRecord>(&line) else {
            continue;
        };
        if rec.rep < replications {
            done.insert(rec.rep, rec);
        }
    }
    Ok(done)
}

/// Runs every replication not already present in `checkpoint` (a JSON-lines
/// file appended as replications finish) and summarizes all of them.
/// Replications are seeded by index, so a resumed run matches an
/// uninterrupted one.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<(ExperimentReport, Vec<ReplicationRecord>)> {
    cfg.validate()?;
    let mut done = match checkpoint {
        Some(p) => read_checkpoint(p, cfg.replications)?,
        None => BTreeMap::new(),
    };
    let todo: Vec<usize> = (0..cfg.replications)
        .filter(|r| !done.contains_key(r))
        .collect();
    let sink = match checkpoint {
        Some(p) => {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            let text = std::fs::read(p)?;
            if text.last().is_some_and(|&b| b != b'\n') {
                writeln!(f)?;
            }
            Some(Mutex::new(f))
        }
        None => None,
    };
    let fresh = todo
        .par_iter()
        .map(|&rep| {
            let rec = match run_replication(cfg, rep) {
                Ok(o) => ReplicationRecord {
                    rep,
                    outcome: Some(o),
                    error: None,
                },
                Err(e) => {
                    log::warn!("replication {rep} failed: {e}");
                    ReplicationRecord {
                        rep,
                        outcome: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            if let Some(sink) = &sink {
                let line = serde_json::to_string(&rec)?;
                let mut f = sink.lock().expect("checkpoint lock poisoned");
                writeln!(f, "{line}")?;
                f.flush()?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    for rec in fresh {
        done.insert(rec.rep, rec);
    }
    let records: Vec<ReplicationRecord> = done.into_values().collect();
    Ok((summarize(cfg, &records), records))
}
