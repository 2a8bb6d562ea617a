use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mstp::data::{load_dataset, write_dataset};
use mstp::inference::OneStepResult;
use mstp::loss::{LossContext, Weighting};
use mstp::pipeline::{run_estimate, run_inference, EstimateOutput, PipelineConfig};
use mstp::simulation::{
    generate, grid_oracle, mc_value, reference_theta, run_experiment, ExperimentConfig,
    OracleConfig,
};
use mstp::{Dataset, PolicyParams, QModel};
use serde::Serialize;

use crate::config::{Manifest, RunConfig};
use crate::error::CliError;

/// Collects the files a command writes into its output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
        let manifest = Manifest {
            tool: "mstp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            outputs: self.written.clone(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.written)
    }
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data.path {
        Some(p) => Ok(load_dataset(p)?),
        None => Ok(generate(&cfg.data.spec(cfg.seed)?)?),
    }
}

fn pipeline(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        seed: cfg.seed,
        ..cfg.pipeline.clone()
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ds = generate(&cfg.data.spec(cfg.seed)?)?;
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf)?;
    out.write("data.csv", &buf)
}

fn write_estimate(est: &EstimateOutput, tau: f64, out: &mut Outputs) -> Result<(), CliError> {
    out.write(
        "initial_policy.json",
        PolicyParams::new(est.initial.theta.clone(), tau)?
            .to_json()
            .as_bytes(),
    )?;
    out.write(
        "policy.json",
        PolicyParams::new(est.estimate.theta.clone(), tau)?
            .to_json()
            .as_bytes(),
    )?;
    out.write("qmodel.json", est.q.to_json().as_bytes())?;
    out.write_json("estimate.json", est)
}

pub fn estimate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ds = dataset(cfg)?;
    let pipe = pipeline(cfg);
    let est = run_estimate(&ds, &pipe)?;
    log::info!(
        "lambda_theta {:e}, support {:?}",
        est.path.chosen,
        est.estimate.support
    );
    write_estimate(&est, pipe.tau, out)
}

fn inference_csv(results: &[OneStepResult]) -> String {
    let f = |v: Option<(f64, f64)>| match v {
        Some((lo, hi)) => format!("{lo},{hi}"),
        None => ",".into(),
    };
    let mut s = String::from(
        "j,theta_hat,theta_tilde,score,info,sigma_s_hat,lambda_w,degenerate,asymptotic_lo,asymptotic_hi,bootstrap_lo,bootstrap_hi\n",
    );
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.j,
            r.theta_hat,
            r.theta_tilde,
            r.score,
            r.info,
            r.sigma_s_hat,
            r.lambda_w,
            r.degenerate,
            f(r.asymptotic_ci),
            f(r.bootstrap_ci)
        ));
    }
    s
}

pub fn infer(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ds = dataset(cfg)?;
    let pipe = pipeline(cfg);
    let est = match &cfg.infer.estimate {
        Some(p) => serde_json::from_str::<EstimateOutput>(&read_text(p)?)?,
        None => {
            let est = run_estimate(&ds, &pipe)?;
            write_estimate(&est, pipe.tau, out)?;
            est
        }
    };
    let inf = run_inference(&ds, &est, &pipe)?;
    out.write("inference.csv", inference_csv(&inf.results).as_bytes())?;
    out.write_json("inference.json", &inf)
}

pub fn oracle(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let spec = cfg.data.spec(cfg.seed)?;
    let ocfg = OracleConfig {
        step: cfg.oracle.step,
        n_test: cfg.oracle.n_test,
        repeats: cfg.oracle.repeats,
        tau: cfg.pipeline.tau,
        seed: cfg.seed,
    };
    let res = grid_oracle(&spec, &ocfg)?;
    out.write_json("oracle.json", &res)
}

#[derive(Serialize)]
struct Evaluation {
    mc_mean: f64,
    mc_se: f64,
    n_test: usize,
    /// Value estimates on the dataset when one is given.
    aipw_unweighted: Option<f64>,
    aipw_weighted: Option<f64>,
}

pub fn evaluate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let path = cfg
        .evaluate
        .policy
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs evaluate.policy".into()))?;
    let p = PolicyParams::from_json(&read_text(path)?)?;
    let spec = cfg.data.spec(cfg.seed)?;
    if p.theta().len() != spec.d + 1 {
        return Err(mstp::Error::Dimension {
            expected: spec.d + 1,
            got: p.theta().len(),
        }
        .into());
    }
    let mc = mc_value(&p, &spec, cfg.evaluate.n_test, cfg.seed)?;
    let (mut unweighted, mut weighted) = (None, None);
    if let Some(dp) = &cfg.data.path {
        let ds = load_dataset(dp)?;
        let q = match &cfg.evaluate.qmodel {
            Some(qp) => QModel::from_json(&read_text(qp)?)?,
            None => QModel::zero(mstp::nuisance::BasisSpec::linear(ds.d()), ds.horizon()),
        };
        unweighted =
            Some(LossContext::new(&ds, &q, p.tau(), Weighting::Unweighted)?.value_estimate(&p));
        weighted =
            Some(LossContext::new(&ds, &q, p.tau(), Weighting::Weighted)?.value_estimate(&p));
    }
    out.write_json(
        "evaluation.json",
        &Evaluation {
            mc_mean: mc.mean,
            mc_se: mc.se,
            n_test: cfg.evaluate.n_test,
            aipw_unweighted: unweighted,
            aipw_weighted: weighted,
        },
    )
}

pub fn experiment(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let spec = cfg.data.spec(cfg.seed)?;
    let theta_star = cfg
        .experiment
        .theta_star
        .clone()
        .unwrap_or_else(|| reference_theta(spec.scenario, spec.horizon, spec.d));
    let ecfg = ExperimentConfig {
        spec,
        pipeline: pipeline(cfg),
        replications: cfg.experiment.replications,
        n_test: cfg.experiment.n_test,
        theta_star,
        seed: cfg.seed,
    };
    ecfg.validate()?;
    // a checkpoint is only reused by the configuration that wrote it
    let stamp = out.path("experiment_config.json");
    let text = serde_json::to_string_pretty(&ecfg)? + "\n";
    let checkpoint = out.path("replications.jsonl");
    if checkpoint.exists() && fs::read_to_string(&stamp).ok().as_deref() != Some(text.as_str()) {
        return Err(CliError::Config(format!(
            "{} was written by a different configuration; remove it or use another output directory",
            checkpoint.display()
        )));
    }
    out.write("experiment_config.json", text.as_bytes())?;
    let (report, records) = run_experiment(&ecfg, Some(&checkpoint))?;
    // rewrite in replicate order so the file does not depend on scheduling
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    out.write("replications.jsonl", lines.as_bytes())?;
    out.write("report.csv", report.to_csv().as_bytes())?;
    out.write("report.txt", report.to_table().as_bytes())?;
    out.write_json("report.json", &report)?;
    print!("{}", report.to_table());
    if report.failed > 0 {
        log::warn!(
            "{} of {} replications failed",
            report.failed,
            report.replications
        );
    }
    Ok(())
}
