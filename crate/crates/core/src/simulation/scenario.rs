//! Two synthetic multi-stage scenarios with EWMA state dynamics.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Action, Dataset, StageRecord, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{index_of, logistic, PolicyParams};
use crate::rng::{stream, Rng};

/// Behavior probability of either action.
pub const BEHAVIOR_PROB: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Exponential reward with an interaction term in the second state.
    #[serde(rename = "1")]
    One,
    /// Linear reward, linear dynamics.
    #[serde(rename = "2")]
    Two,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Scenario::One),
            "2" => Ok(Scenario::Two),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scenario {s:?}, expected 1 or 2"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    #[default]
    Standard,
    /// Keep only the action term of the scenario-2 reward, `-0.5 A`.
    ActionOnly,
    Zero,
}

/// Test hooks for deterministic propagation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hooks {
    pub forced_action: Option<Action>,
    pub zero_noise: bool,
    pub initial_state: Option<Vec<f64>>,
    pub reward: RewardKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub horizon: usize,
    pub noise_sd: f64,
    pub ewma_weight: f64,
    pub seed: u64,
    #[serde(default)]
    pub hooks: Hooks,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, d: usize, horizon: usize, seed: u64) -> Result<Self> {
        let spec = ScenarioSpec {
            scenario,
            n,
            d,
            horizon,
            noise_sd: 0.2f64.sqrt(),
            ewma_weight: 0.8,
            seed,
            hooks: Hooks::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidArgument(format!(
                "scenarios need d >= 2, got {}",
                self.d
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0) || !(0.0..=1.0).contains(&self.ewma_weight) {
            return Err(Error::InvalidArgument(
                "noise sd must be >= 0 and ewma weight in [0, 1]".into(),
            ));
        }
        if let Some(x) = &self.hooks.initial_state {
            if x.len() != self.d {
                return Err(Error::Dimension {
                    expected: self.d,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        ScenarioSpec { n, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec {
            seed,
            ..self.clone()
        }
    }
}

/// `(1 - w) * prev + w * x`.
pub fn ewma_update(prev: f64, x: f64, w: f64) -> f64 {
    (1.0 - w) * prev + w * x
}

/// Noise-free mean of the two informative coordinates at the next stage.
pub fn next_mean(scenario: Scenario, smoothed: [f64; 2], a: f64) -> [f64; 2] {
    let [x1, x2] = smoothed;
    match scenario {
        Scenario::One => [
            0.6 * a * x1 + 0.2 * x1 + 0.1 * x2,
            -0.6 * a * x2 + 0.3 * x1 * x2,
        ],
        Scenario::Two => [
            0.5 * a * x1 + 0.3 * x1 + 0.1 * x2,
            0.5 * a * x2 + 0.1 * x1 + 0.3 * x2,
        ],
    }
}

/// Reward earned at a stage given the next-stage informative coordinates.
pub fn reward(scenario: Scenario, kind: RewardKind, next: [f64; 2], a: f64) -> f64 {
    match kind {
        RewardKind::Zero => 0.0,
        RewardKind::ActionOnly => -0.5 * a,
        RewardKind::Standard => match scenario {
            Scenario::One => (0.5 * (next[0] + next[1]) - 0.2 * a - 1.0).exp(),
            Scenario::Two => next[0] + next[1] - 0.5 * a,
        },
    }
}

fn draw_noise(spec: &ScenarioSpec, rng: &mut Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if spec.hooks.zero_noise {
        0.0
    } else {
        spec.noise_sd * z
    }
}

/// Simulates one subject. `choose(x, u)` maps the state and a uniform draw to
/// the action and the probability with which it was taken.
pub(crate) fn simulate_subject<F>(
    spec: &ScenarioSpec,
    rng: &mut Rng,
    mut choose: F,
) -> Vec<StageRecord>
where
    F: FnMut(&[f64], f64) -> (Action, f64),
{
    let d = spec.d;
    let mut x: Vec<f64> = match &spec.hooks.initial_state {
        Some(x0) => {
            // keep the stream aligned with the unhooked generator
            for _ in 0..d {
                let _: f64 = rng.sample(StandardNormal);
            }
            x0.clone()
        }
        None => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
    };
    let mut smoothed = [x[0], x[1]];
    let mut stages = Vec::with_capacity(spec.horizon);
    for _ in 0..spec.horizon {
        let u: f64 = rng.gen();
        let (a, mu) = match spec.hooks.forced_action {
            Some(forced) => (forced, 1.0),
            None => choose(&x, u),
        };
        let mean = next_mean(spec.scenario, smoothed, a.sign());
        let mut next = vec![0.0; d];
        next[0] = mean[0] + draw_noise(spec, rng);
        next[1] = mean[1] + draw_noise(spec, rng);
        for v in next.iter_mut().skip(2) {
            *v = draw_noise(spec, rng);
        }
        let r = reward(
            spec.scenario,
            spec.hooks.reward,
            [next[0], next[1]],
            a.sign(),
        );
        stages.push(StageRecord { x, a, r, mu });
        for j in 0..2 {
            smoothed[j] = ewma_update(smoothed[j], next[j], spec.ewma_weight);
        }
        x = next;
    }
    stages
}

fn behavior(_: &[f64], u: f64) -> (Action, f64) {
    (
        if u < BEHAVIOR_PROB {
            Action::Plus
        } else {
            Action::Minus
        },
        BEHAVIOR_PROB,
    )
}

/// Trajectories under the uniform behavior policy.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let trajectories: Vec<Trajectory> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, "generate", i as u64, 0);
            Trajectory {
                subject: format!("s{i}"),
                stages: simulate_subject(spec, &mut rng, behavior),
            }
        })
        .collect();
    Dataset::new(trajectories)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub mean: f64,
    pub se: f64,
}

/// Total rewards of `n_test` on-policy rollouts.
pub fn rollout_totals(
    p: &PolicyParams,
    spec: &ScenarioSpec,
    n_test: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if p.d() != spec.d {
        return Err(Error::Dimension {
            expected: spec.d,
            got: p.d(),
        });
    }
    let (theta, tau) = (p.theta(), p.tau());
    Ok((0..n_test)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "rollout", i as u64, 0);
            let stages = simulate_subject(spec, &mut rng, |x, u| {
                let plus = logistic(index_of(theta, x) / tau);
                if u < plus {
                    (Action::Plus, plus)
                } else {
                    (Action::Minus, 1.0 - plus)
                }
            });
            stages.iter().map(|s| s.r).sum::<f64>()
        })
        .collect())
}

/// Monte Carlo value of `p` with its standard error.
pub fn mc_value(
    p: &PolicyParams,
    spec: &ScenarioSpec,
    n_test: usize,
    seed: u64,
) -> Result<McValue> {
    if n_test == 0 {
        return Err(Error::InvalidArgument("n_test must be positive".into()));
    }
    let totals = rollout_totals(p, spec, n_test, seed)?;
    Ok(mean_se(&totals))
}

pub fn mean_se(v: &[f64]) -> McValue {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    McValue {
        mean,
        se: (var / n).sqrt(),
    }
}
