//! Grid search for the best policy over the two informative coordinates.
//!
//! Candidate policies use only `(theta_0, theta_1, theta_2)`, so each test
//! subject is summarized by its full binary action tree: the informative
//! states at every node and the reward on every edge, with one noise draw per
//! stage shared by all branches. The value of a candidate is then the exact
//! expectation over actions, averaged over subjects. All candidates in one
//! repeat see the same subjects.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{ewma_update, next_mean, reward, ScenarioSpec};
use crate::error::{Error, Result};
use crate::policy::{logistic, normalize_to_sphere, DEFAULT_TAU};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub step: f64,
    pub n_test: usize,
    pub repeats: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            step: 0.05,
            n_test: 50_000,
            repeats: 4,
            tau: DEFAULT_TAU,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Unit vector of length `d + 1`, zero beyond the first three entries.
    pub theta: Vec<f64>,
    /// Best `(theta_0, theta_1, theta_2)` in each repeat.
    pub per_repeat: Vec<[f64; 3]>,
    /// Estimated value of each repeat's best point.
    pub best_values: Vec<f64>,
}

/// Informative states per node and rewards per edge of one subject's tree.
struct ActionTree {
    horizon: usize,
    states: Vec<[f64; 2]>,
    rewards: Vec<f64>,
}

impl ActionTree {
    fn build(spec: &ScenarioSpec, seed: u64, repeat: u64, i: u64) -> Self {
        let mut rng = stream(seed, "oracle", repeat, i);
        let horizon = spec.horizon;
        let x0: [f64; 2] = match &spec.hooks.initial_state {
            Some(x) => [x[0], x[1]],
            None => [rng.sample(StandardNormal), rng.sample(StandardNormal)],
        };
        let noise: Vec<[f64; 2]> = (0..horizon)
            .map(|_| {
                let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                if spec.hooks.zero_noise {
                    [0.0, 0.0]
                } else {
                    [spec.noise_sd * z[0], spec.noise_sd * z[1]]
                }
            })
            .collect();
        let nodes = (1usize << horizon) - 1;
        let mut states = vec![[0.0; 2]; nodes];
        let mut smoothed = vec![[0.0; 2]; nodes];
        let mut rewards = vec![0.0; 2 * nodes];
        states[0] = x0;
        smoothed[0] = x0;
        for t in 0..horizon {
            let first = (1usize << t) - 1;
            for k in 0..(1usize << t) {
                let node = first + k;
                for (b, a) in [1.0, -1.0].into_iter().enumerate() {
                    let m = next_mean(spec.scenario, smoothed[node], a);
                    let next = [m[0] + noise[t][0], m[1] + noise[t][1]];
                    rewards[2 * node + b] = reward(spec.scenario, spec.hooks.reward, next, a);
                    if t + 1 < horizon {
                        let child = (1usize << (t + 1)) - 1 + 2 * k + b;
                        states[child] = next;
                        let w = spec.ewma_weight;
                        smoothed[child] = [
                            ewma_update(smoothed[node][0], next[0], w),
                            ewma_update(smoothed[node][1], next[1], w),
                        ];
                    }
                }
            }
        }
        ActionTree {
            horizon,
            states,
            rewards,
        }
    }

    /// Expected total reward under the policy `(t0, t1, t2)`.
    fn value(&self, t: [f64; 3], tau: f64, reach: &mut [f64]) -> f64 {
        reach[0] = 1.0;
        let mut total = 0.0;
        for level in 0..self.horizon {
            let first = (1usize << level) - 1;
            for k in 0..(1usize << level) {
                let node = first + k;
                let s = self.states[node];
                let plus = logistic((t[0] + t[1] * s[0] + t[2] * s[1]) / tau);
                let r = reach[node];
                total +=
                    r * (plus * self.rewards[2 * node] + (1.0 - plus) * self.rewards[2 * node + 1]);
                if level + 1 < self.horizon {
                    let child = (1usize << (level + 1)) - 1 + 2 * k;
                    reach[child] = r * plus;
                    reach[child + 1] = r * (1.0 - plus);
                }
            }
        }
        total
    }
}

/// Candidate `(theta_0, theta_1, theta_2)` on the grid `step * Z^2` inside
/// the unit disk, with both signs of `theta_0`.
pub fn grid_points(step: f64) -> Vec<[f64; 3]> {
    let m = (1.0 / step + 1e-9).floor() as i64;
    let mut pts = Vec::new();
    for a in -m..=m {
        for b in -m..=m {
            let (t1, t2) = (a as f64 * step, b as f64 * step);
            let r2 = t1 * t1 + t2 * t2;
            if r2 > 1.0 + 1e-12 {
                continue;
            }
            let t0 = (1.0 - r2).max(0.0).sqrt();
            pts.push([t0, t1, t2]);
            if t0 > 0.0 {
                pts.push([-t0, t1, t2]);
            }
        }
    }
    pts
}

/// Action-marginalized values of `points` on one shared test set.
pub fn tree_values(
    spec: &ScenarioSpec,
    points: &[[f64; 3]],
    n_test: usize,
    tau: f64,
    seed: u64,
    repeat: u64,
) -> Vec<f64> {
    let trees: Vec<ActionTree> = (0..n_test)
        .into_par_iter()
        .map(|i| ActionTree::build(spec, seed, repeat, i as u64))
        .collect();
    let nodes = (1usize << spec.horizon) - 1;
    points
        .par_iter()
        .map_init(
            || vec![0.0; nodes],
            |reach, &p| trees.iter().map(|t| t.value(p, tau, reach)).sum::<f64>() / n_test as f64,
        )
        .collect()
}

/// Averages the per-repeat grid maximizers and renormalizes.
pub fn grid_oracle(spec: &ScenarioSpec, cfg: &OracleConfig) -> Result<OracleResult> {
    spec.validate()?;
    if !(cfg.step > 0.0) || cfg.n_test == 0 || cfg.repeats == 0 || !(cfg.tau > 0.0) {
        return Err(Error::InvalidArgument(
            "oracle needs step > 0, n_test > 0, repeats > 0, tau > 0".into(),
        ));
    }
    let points = grid_points(cfg.step);
    let mut per_repeat = Vec::with_capacity(cfg.repeats);
    let mut best_values = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let values = tree_values(spec, &points, cfg.n_test, cfg.tau, cfg.seed, r as u64);
        let best = (0..points.len())
            .filter(|&k| values[k].is_finite())
            .max_by(|&a, &b| values[a].total_cmp(&values[b]))
            .ok_or_else(|| Error::Numeric("no finite value on the grid".into()))?;
        per_repeat.push(points[best]);
        best_values.push(values[best]);
    }
    let mut avg = [0.0; 3];
    for p in &per_repeat {
        for k in 0..3 {
            avg[k] += p[k] / cfg.repeats as f64;
        }
    }
    let head = normalize_to_sphere(&avg)?;
    let mut theta = vec![0.0; spec.d + 1];
    theta[..3].copy_from_slice(&head);
    Ok(OracleResult {
        theta,
        per_repeat,
        best_values,
    })
}
