//! Synthetic scenarios, Monte Carlo policy values, the grid oracle for the
//! optimal parameter, and the replication harness.

pub mod experiment;
pub mod oracle;
pub mod scenario;

pub use experiment::{reference_theta, run_experiment, ExperimentConfig, ExperimentReport};
pub use oracle::{grid_oracle, OracleConfig, OracleResult};
pub use scenario::{generate, mc_value, McValue, Scenario, ScenarioSpec};
