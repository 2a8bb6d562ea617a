//! Estimation and inference for sparse stationary treatment policies in
//! multi-stage decision problems.
//!
//! The pipeline is: load or simulate trajectories ([`data`], [`simulation`]),
//! fit the Q-model nuisance ([`nuisance`]), minimize the augmented
//! inverse-probability-weighted loss on the unit sphere with an L1 penalty
//! ([`loss`], [`optimizer`]), and build one-step debiased confidence
//! intervals ([`inference`]).

pub mod data;
pub mod error;
pub mod importance;
pub mod inference;
pub mod lasso;
pub mod loss;
pub mod nuisance;
pub mod optimizer;
pub mod pipeline;
pub mod policy;
pub mod rng;
pub mod simulation;

pub use data::{Action, Dataset, StageRecord, Trajectory};
pub use error::{Error, Result};
pub use loss::{LossContext, Objective, SampleObjective, Weighting};
pub use nuisance::{QModel, QVariant};
pub use policy::PolicyParams;
