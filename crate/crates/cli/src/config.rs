use std::path::{Path, PathBuf};

use mstp::pipeline::PipelineConfig;
use mstp::simulation::{OracleConfig, Scenario, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Existing dataset CSV; when absent the scenario below is simulated.
    pub path: Option<PathBuf>,
    pub scenario: u8,
    pub n: usize,
    pub d: usize,
    pub horizon: usize,
    /// Standard deviation of the state noise.
    pub noise_sd: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            scenario: 2,
            n: 200,
            d: 10,
            horizon: 1,
            noise_sd: 0.2f64.sqrt(),
        }
    }
}

impl DataConfig {
    pub fn spec(&self, seed: u64) -> Result<ScenarioSpec, CliError> {
        let scenario = Scenario::parse(&self.scenario.to_string())?;
        let mut spec = ScenarioSpec::new(scenario, self.n, self.d, self.horizon, seed)?;
        spec.noise_sd = self.noise_sd;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub step: f64,
    pub n_test: usize,
    pub repeats: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        let o = OracleConfig::default();
        OracleSection {
            step: o.step,
            n_test: o.n_test,
            repeats: o.repeats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Policy JSON to evaluate.
    pub policy: Option<PathBuf>,
    /// Q-model JSON used for the augmented estimate on the dataset.
    pub qmodel: Option<PathBuf>,
    pub n_test: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            policy: None,
            qmodel: None,
            n_test: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub replications: usize,
    pub n_test: usize,
    /// Reference parameter; defaults to the reference optimum of the scenario.
    pub theta_star: Option<Vec<f64>>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            replications: 20,
            n_test: 10_000,
            theta_star: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    /// `estimate.json` from a previous `estimate` run; re-estimated when absent.
    pub estimate: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Root of all randomness.
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    pub infer: InferSection,
    pub oracle: OracleSection,
    pub evaluate: EvaluateSection,
    pub experiment: ExperimentSection,
}

/// What a manifest records: enough to rerun the command bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

/// Reads a TOML config, or the config stored in a `manifest.json`.
pub fn load_config(path: &Path) -> Result<(RunConfig, Option<String>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok((m.config, Some(m.command)));
    }
    let cfg =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, None))
}
