//! The augmented inverse-probability-weighted value loss.
//!
//! For subject `i` the per-sample loss is
//!
//! ```text
//! l_i = - sum_t { w_{i,t} [R_{i,t} - Q_t(X_{i,t}, A_{i,t})] + w_{i,t-1} U_t(X_{i,t}) }
//! ```
//!
//! where `w_{i,t}` is the cumulative ratio `rho_{i,1:t}` (unweighted mode) or
//! `rho_{i,1:t} / wbar_t` (weighted mode), with `w_{i,0} = 1`. With the zero
//! Q-model this reduces to the (weighted) inverse-probability-weighted loss.
//! The loss depends on `theta` only through the linear indices
//! `g_{i,t} = theta' (1, X_{i,t})`, which [`Objective::near`] exploits to
//! re-evaluate points that differ from an anchor in a few coordinates at
//! `O(n T)` cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::importance::WBAR_FLOOR;
use crate::nuisance::QModel;
use crate::policy::PolicyParams;
use crate::rng::derive_seed;
use crate::simulation::scenario::mean_se;
use crate::simulation::{generate, mc_value, ScenarioSpec};

/// A scalar function on parameter vectors `(theta_0, ..., theta_d)`.
pub trait Objective: Sync {
    /// Length of `theta`.
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    /// An evaluator tuned for points close to `base` (few changed coordinates).
    fn near<'a>(&'a self, base: &[f64]) -> Box<dyn Fn(&[f64]) -> f64 + 'a> {
        let _ = base;
        Box::new(move |t| self.value(t))
    }
}

/// An objective that is the mean of per-subject terms.
pub trait SampleObjective: Objective {
    fn sample_count(&self) -> usize;

    fn per_sample(&self, theta: &[f64]) -> Vec<f64>;

    fn per_sample_near<'a>(&'a self, base: &[f64]) -> Box<dyn Fn(&[f64]) -> Vec<f64> + 'a> {
        let _ = base;
        Box::new(move |t| self.per_sample(t))
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        (**self).value(theta)
    }
    fn near<'a>(&'a self, base: &[f64]) -> Box<dyn Fn(&[f64]) -> f64 + 'a> {
        (**self).near(base)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Ratios divided by their cross-subject stage mean.
    Weighted,
    /// Raw cumulative ratios.
    Unweighted,
}

/// How the augmentation term `U_t` is formed. Only [`UMode::Mixture`] gives
/// an unbiased estimator; [`UMode::PlusOnly`] exists as a negative control.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UMode {
    Mixture,
    PlusOnly,
}

/// Dataset, Q-model and temperature flattened for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct LossContext {
    n: usize,
    horizon: usize,
    d: usize,
    tau: f64,
    weighting: Weighting,
    u_mode: UMode,
    wbar_floor: f64,
    augmented: bool,
    /// `(n * horizon) x d`, row-major in subject then stage order.
    x: Vec<f64>,
    /// The same matrix column-major, for single-coordinate shifts.
    xt: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    log_mu: Vec<f64>,
    inv_mu: Vec<f64>,
    q_obs: Vec<f64>,
    q_plus: Vec<f64>,
    q_minus: Vec<f64>,
}

impl LossContext {
    pub fn new(ds: &Dataset, q: &QModel, tau: f64, weighting: Weighting) -> Result<Self> {
        if q.horizon() != ds.horizon() {
            return Err(Error::Dimension {
                expected: ds.horizon(),
                got: q.horizon(),
            });
        }
        if q.basis.d != ds.d() {
            return Err(Error::Dimension {
                expected: ds.d(),
                got: q.basis.d,
            });
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {tau}"
            )));
        }
        let (n, horizon, d) = (ds.n(), ds.horizon(), ds.d());
        let rows = n * horizon;
        let mut ctx = LossContext {
            n,
            horizon,
            d,
            tau,
            weighting,
            u_mode: UMode::Mixture,
            wbar_floor: WBAR_FLOOR,
            augmented: !q.is_zero(),
            x: Vec::with_capacity(rows * d),
            xt: vec![0.0; rows * d],
            a: Vec::with_capacity(rows),
            r: Vec::with_capacity(rows),
            log_mu: Vec::with_capacity(rows),
            inv_mu: Vec::with_capacity(rows),
            q_obs: Vec::with_capacity(rows),
            q_plus: Vec::with_capacity(rows),
            q_minus: Vec::with_capacity(rows),
        };
        for traj in ds.trajectories() {
            for (t, s) in traj.stages.iter().enumerate() {
                ctx.x.extend_from_slice(&s.x);
                ctx.a.push(s.a.sign());
                ctx.r.push(s.r);
                ctx.log_mu.push(s.mu.ln());
                ctx.inv_mu.push(1.0 / s.mu);
                let (qp, qm) = q.predict_pair(t, &s.x)?;
                ctx.q_plus.push(qp);
                ctx.q_minus.push(qm);
                ctx.q_obs.push(if s.a.sign() > 0.0 { qp } else { qm });
            }
        }
        for k in 0..rows {
            for l in 0..d {
                ctx.xt[l * rows + k] = ctx.x[k * d + l];
            }
        }
        Ok(ctx)
    }

    /// Replaces the augmentation mixture (negative-control hook).
    pub fn with_u_mode(mut self, mode: UMode) -> Self {
        self.u_mode = mode;
        self
    }

    pub fn with_wbar_floor(mut self, floor: f64) -> Self {
        self.wbar_floor = floor;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Linear indices `g_{i,t}` for a raw parameter.
    pub fn indices(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.d + 1, "theta has the wrong length");
        let slopes = &theta[1..];
        self.x
            .chunks_exact(self.d)
            .map(|row| theta[0] + row.iter().zip(slopes).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn column(&self, l: usize) -> &[f64] {
        let rows = self.n * self.horizon;
        &self.xt[l * rows..(l + 1) * rows]
    }

    /// Coordinates where `theta` departs from `base`, or `None` when a full
    /// recomputation is cheaper.
    fn changes(&self, base: &[f64], theta: &[f64]) -> Option<Vec<(usize, f64)>> {
        let changed: Vec<(usize, f64)> = (0..theta.len())
            .filter(|&l| theta[l] != base[l])
            .map(|l| (l, theta[l] - base[l]))
            .collect();
        if changed.len() * 3 > theta.len() {
            None
        } else {
            Some(changed)
        }
    }

    fn indices_near(&self, base_theta: &[f64], base_g: &[f64], theta: &[f64]) -> Vec<f64> {
        let Some(changed) = self.changes(base_theta, theta) else {
            return self.indices(theta);
        };
        let mut g = base_g.to_vec();
        for (l, delta) in changed {
            if l == 0 {
                g.iter_mut().for_each(|v| *v += delta);
            } else {
                g.iter_mut()
                    .zip(self.column(l - 1))
                    .for_each(|(v, x)| *v += delta * x);
            }
        }
        g
    }

    /// Mean loss in a single pass over the rows, accumulating per-stage sums
    /// so that the stage normalizers can be applied at the end.
    fn loss_streaming<G: Fn(usize) -> f64>(&self, g: G) -> f64 {
        let horizon = self.horizon;
        let inv_tau = 1.0 / self.tau;
        // [sum rho_t, sum rho_t (R - Q), sum rho_{t-1} U_t] per stage
        let mut acc = vec![0.0; 3 * horizon];
        for i in 0..self.n {
            let mut rho = 1.0;
            for t in 0..horizon {
                let k = i * horizon + t;
                // overflow of the exponential still yields the right limit
                let pi_obs = 1.0 / (1.0 + (-self.a[k] * g(k) * inv_tau).exp());
                let prev = rho;
                rho *= pi_obs * self.inv_mu[k];
                acc[3 * t] += rho;
                if self.augmented {
                    let p_plus = if self.a[k] > 0.0 {
                        pi_obs
                    } else {
                        1.0 - pi_obs
                    };
                    let u = match self.u_mode {
                        UMode::Mixture => {
                            p_plus * self.q_plus[k] + (1.0 - p_plus) * self.q_minus[k]
                        }
                        UMode::PlusOnly => self.q_plus[k],
                    };
                    acc[3 * t + 1] += rho * (self.r[k] - self.q_obs[k]);
                    acc[3 * t + 2] += prev * u;
                } else {
                    acc[3 * t + 1] += rho * self.r[k];
                }
            }
        }
        let n = self.n as f64;
        let mut total = 0.0;
        let mut w_prev = 1.0;
        for t in 0..horizon {
            let w = match self.weighting {
                Weighting::Weighted => (acc[3 * t] / n).max(self.wbar_floor),
                Weighting::Unweighted => 1.0,
            };
            total += acc[3 * t + 1] / w + acc[3 * t + 2] / w_prev;
            w_prev = w;
        }
        -total / n
    }

    /// Per-subject losses from precomputed linear indices.
    pub fn per_sample_from_indices(&self, g: &[f64]) -> Vec<f64> {
        let (n, horizon) = (self.n, self.horizon);
        let mut rho = vec![0.0; n * horizon];
        let mut p_plus = if self.augmented {
            vec![0.0; n * horizon]
        } else {
            Vec::new()
        };
        let mut wbar = vec![1.0; horizon + 1];
        if self.weighting == Weighting::Weighted {
            wbar[1..].iter_mut().for_each(|w| *w = 0.0);
        }
        for i in 0..n {
            let mut log_ratio = 0.0;
            for t in 0..horizon {
                let k = i * horizon + t;
                let u = self.a[k] * g[k] / self.tau;
                // pi(A | X) and its log from one exponential
                let (pi_obs, log_pi) = if u >= 0.0 {
                    let e = (-u).exp();
                    (1.0 / (1.0 + e), -e.ln_1p())
                } else {
                    let e = u.exp();
                    (e / (1.0 + e), u - e.ln_1p())
                };
                log_ratio += log_pi - self.log_mu[k];
                let r = log_ratio.exp();
                rho[k] = r;
                if self.augmented {
                    p_plus[k] = if self.a[k] > 0.0 {
                        pi_obs
                    } else {
                        1.0 - pi_obs
                    };
                }
                if self.weighting == Weighting::Weighted {
                    wbar[t + 1] += r;
                }
            }
        }
        if self.weighting == Weighting::Weighted {
            for w in &mut wbar[1..] {
                *w = (*w / n as f64).max(self.wbar_floor);
            }
        }
        (0..n)
            .map(|i| {
                let mut total = 0.0;
                let mut prev = 1.0;
                for t in 0..horizon {
                    let k = i * horizon + t;
                    let w = rho[k] / wbar[t + 1];
                    if self.augmented {
                        let u = match self.u_mode {
                            UMode::Mixture => {
                                p_plus[k] * self.q_plus[k] + (1.0 - p_plus[k]) * self.q_minus[k]
                            }
                            UMode::PlusOnly => self.q_plus[k],
                        };
                        total += w * (self.r[k] - self.q_obs[k]) + prev * u;
                    } else {
                        total += w * self.r[k];
                    }
                    prev = w;
                }
                -total
            })
            .collect()
    }

    pub fn loss_from_indices(&self, g: &[f64]) -> f64 {
        let terms = self.per_sample_from_indices(g);
        terms.iter().sum::<f64>() / self.n as f64
    }

    /// `l_i` for one subject.
    pub fn per_sample_loss(&self, p: &PolicyParams, i: usize) -> f64 {
        self.per_sample(p.theta())[i]
    }

    /// Mean of the per-sample losses.
    pub fn loss(&self, p: &PolicyParams) -> f64 {
        self.value(p.theta())
    }

    /// `-loss`, the value estimate.
    pub fn value_estimate(&self, p: &PolicyParams) -> f64 {
        -self.loss(p)
    }
}

impl Objective for LossContext {
    fn dim(&self) -> usize {
        self.d + 1
    }

    fn value(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.d + 1, "theta has the wrong length");
        let slopes = &theta[1..];
        let d = self.d;
        self.loss_streaming(|k| {
            theta[0]
                + self.x[k * d..(k + 1) * d]
                    .iter()
                    .zip(slopes)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
    }

    fn near<'a>(&'a self, base: &[f64]) -> Box<dyn Fn(&[f64]) -> f64 + 'a> {
        let base_theta = base.to_vec();
        let base_g = self.indices(base);
        Box::new(move |t| match self.changes(&base_theta, t) {
            None => self.value(t),
            Some(ch) if ch.is_empty() => self.loss_streaming(|k| base_g[k]),
            Some(ch) if ch.len() == 1 => {
                let (l, delta) = ch[0];
                if l == 0 {
                    self.loss_streaming(|k| base_g[k] + delta)
                } else {
                    let col = self.column(l - 1);
                    self.loss_streaming(|k| base_g[k] + delta * col[k])
                }
            }
            Some(ch) => {
                let cols: Vec<(Option<&[f64]>, f64)> = ch
                    .iter()
                    .map(|&(l, delta)| {
                        (
                            if l == 0 {
                                None
                            } else {
                                Some(self.column(l - 1))
                            },
                            delta,
                        )
                    })
                    .collect();
                self.loss_streaming(|k| {
                    base_g[k]
                        + cols
                            .iter()
                            .map(|(c, delta)| match c {
                                None => *delta,
                                Some(c) => delta * c[k],
                            })
                            .sum::<f64>()
                })
            }
        })
    }
}

impl SampleObjective for LossContext {
    fn sample_count(&self) -> usize {
        self.n
    }

    fn per_sample(&self, theta: &[f64]) -> Vec<f64> {
        self.per_sample_from_indices(&self.indices(theta))
    }

    fn per_sample_near<'a>(&'a self, base: &[f64]) -> Box<dyn Fn(&[f64]) -> Vec<f64> + 'a> {
        let base_theta = base.to_vec();
        let base_g = self.indices(base);
        Box::new(move |t| self.per_sample_from_indices(&self.indices_near(&base_theta, &base_g, t)))
    }
}

/// Outcome of [`value_unbiasedness_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub reps: usize,
    /// Mean of the unweighted value estimates over the fresh datasets.
    pub mean_estimate: f64,
    pub se_estimate: f64,
    /// Monte Carlo value from on-policy rollouts.
    pub mc_value: f64,
    pub mc_se: f64,
    /// `(mean_estimate - mc_value) / sqrt(se_estimate^2 + mc_se^2)`.
    pub z: f64,
}

/// Simulates `reps` fresh datasets under the behaviour policy and compares the
/// mean unweighted value estimate of `p` with its rollout value.
///
/// `q` stays fixed across replicates and should be fitted on independent data.
pub fn value_unbiasedness_check(
    spec: &ScenarioSpec,
    p: &PolicyParams,
    q: &QModel,
    reps: usize,
    n_rollout: usize,
    seed: u64,
    mode: UMode,
) -> Result<UnbiasednessReport> {
    if reps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicates, got {reps}"
        )));
    }
    let estimates = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let ds = generate(&spec.with_seed(derive_seed(seed, "unbiasedness", r, 0)))?;
            let ctx = LossContext::new(&ds, q, p.tau(), Weighting::Unweighted)?.with_u_mode(mode);
            Ok(ctx.value_estimate(p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let est = mean_se(&estimates);
    let mc = mc_value(
        p,
        spec,
        n_rollout,
        derive_seed(seed, "unbiasedness-mc", 0, 0),
    )?;
    let denom = (est.se * est.se + mc.se * mc.se).sqrt();
    let z = if denom > 0.0 {
        (est.mean - mc.mean) / denom
    } else {
        0.0
    };
    Ok(UnbiasednessReport {
        reps,
        mean_estimate: est.mean,
        se_estimate: est.se,
        mc_value: mc.mean,
        mc_se: mc.se,
        z,
    })
}
