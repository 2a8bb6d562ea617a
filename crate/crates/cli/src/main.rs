//! `mstp`: simulate data, estimate sparse stationary policies, run one-step
//! inference and replication experiments.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mstp::nuisance::QVariant;

use crate::commands::Outputs;
use crate::config::{load_config, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "mstp",
    version,
    about = "Sparse stationary treatment policies with one-step inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config, or a manifest.json from an earlier run to replay it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "mstp-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dataset CSV to use instead of simulating.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    scenario: Option<u8>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true, value_enum)]
    q_variant: Option<QArg>,
    /// Bootstrap replicates (0 disables the bootstrap).
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Policy JSON for `evaluate`.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    /// estimate.json for `infer`.
    #[arg(long, global = true)]
    estimate: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a simulated dataset.
    Simulate,
    /// Initial estimate, Q-model and sparse policy estimate.
    Estimate,
    /// One-step estimates with asymptotic and bootstrap intervals.
    Infer,
    /// Grid search for the optimal parameter of a scenario.
    Oracle,
    /// Monte Carlo and on-data value of a policy.
    Evaluate,
    /// Replication study with value, MAD and coverage summaries.
    Experiment,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Infer => "infer",
            Command::Oracle => "oracle",
            Command::Evaluate => "evaluate",
            Command::Experiment => "experiment",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum QArg {
    Q0,
    Q1,
    Q2,
}

impl Cli {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let (cfg, cmd) = load_config(p)?;
                if let Some(cmd) = cmd {
                    if cmd != self.command.name() {
                        return Err(CliError::Config(format!(
                            "manifest was written by `{cmd}`, not `{}`",
                            self.command.name()
                        )));
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.data {
            cfg.data.path = Some(v.clone());
        }
        if let Some(v) = self.scenario {
            cfg.data.scenario = v;
        }
        if let Some(v) = self.n {
            cfg.data.n = v;
        }
        if let Some(v) = self.d {
            cfg.data.d = v;
        }
        if let Some(v) = self.horizon {
            cfg.data.horizon = v;
        }
        if let Some(v) = self.q_variant {
            cfg.pipeline.q_variant = match v {
                QArg::Q0 => QVariant::Zero,
                QArg::Q1 => QVariant::Regression,
                QArg::Q2 => QVariant::VarianceMin,
            };
        }
        if let Some(v) = self.bootstrap {
            cfg.pipeline.bootstrap = v;
        }
        if let Some(v) = self.alpha {
            cfg.pipeline.alpha = v;
        }
        if let Some(v) = self.replications {
            cfg.experiment.replications = v;
        }
        if let Some(v) = &self.policy {
            cfg.evaluate.policy = Some(v.clone());
        }
        if let Some(v) = &self.estimate {
            cfg.infer.estimate = Some(v.clone());
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut out = Outputs::new(&cli.out)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out)?,
        Command::Estimate => commands::estimate(&cfg, &mut out)?,
        Command::Infer => commands::infer(&cfg, &mut out)?,
        Command::Oracle => commands::oracle(&cfg, &mut out)?,
        Command::Evaluate => commands::evaluate(&cfg, &mut out)?,
        Command::Experiment => commands::experiment(&cfg, &mut out)?,
    }
    for name in out.finish(cli.command.name(), &cfg)? {
        log::info!("wrote {}", cli.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mstp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
