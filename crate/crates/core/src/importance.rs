//! Cumulative stepwise importance ratios and their self-normalizing averages.

use crate::data::Dataset;
use crate::policy::{index_of, log_logistic, PolicyParams};

/// Floor applied to the stage normalizers before dividing by them.
pub const WBAR_FLOOR: f64 = 1e-12;

/// `rho[i][t]` is the cumulative ratio through stage `t + 1`; `wbar[t]` is the
/// column mean of stage `t` ratios with `wbar[0] = 1` for the empty product.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioTable {
    n: usize,
    horizon: usize,
    rho: Vec<f64>,
    wbar: Vec<f64>,
}

impl RatioTable {
    /// Builds the table from per-stage log ratios `log pi - log mu`, laid out
    /// row-major as `n x horizon`.
    pub fn from_log_steps(n: usize, horizon: usize, log_steps: &[f64]) -> Self {
        debug_assert_eq!(log_steps.len(), n * horizon);
        let mut rho = vec![0.0; n * horizon];
        let mut wbar = vec![0.0; horizon + 1];
        wbar[0] = 1.0;
        for i in 0..n {
            let mut acc = 0.0;
            for t in 0..horizon {
                acc += log_steps[i * horizon + t];
                let r = acc.exp();
                rho[i * horizon + t] = r;
                wbar[t + 1] += r;
            }
        }
        for w in &mut wbar[1..] {
            *w /= n as f64;
        }
        RatioTable {
            n,
            horizon,
            rho,
            wbar,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Cumulative ratio of subject `i` through `stages` stages (`stages = 0` gives 1).
    pub fn rho(&self, i: usize, stages: usize) -> f64 {
        if stages == 0 {
            1.0
        } else {
            self.rho[i * self.horizon + stages - 1]
        }
    }

    /// Normalizer over the first `stages` stages (`stages = 0` gives 1).
    pub fn wbar(&self, stages: usize) -> f64 {
        self.wbar[stages]
    }

    /// `rho / max(wbar, floor)`.
    pub fn normalized(&self, i: usize, stages: usize) -> f64 {
        self.rho(i, stages) / self.wbar(stages).max(WBAR_FLOOR)
    }
}

/// Ratios of the policy `p` against the recorded behavior probabilities.
pub fn compute_ratios(p: &PolicyParams, ds: &Dataset) -> RatioTable {
    compute_ratios_raw(p.theta(), p.tau(), ds)
}

/// As [`compute_ratios`] for a raw parameter that need not be unit-norm.
pub fn compute_ratios_raw(theta: &[f64], tau: f64, ds: &Dataset) -> RatioTable {
    let (n, horizon) = (ds.n(), ds.horizon());
    let mut log_steps = Vec::with_capacity(n * horizon);
    for traj in ds.trajectories() {
        for s in &traj.stages {
            let g = index_of(theta, &s.x);
            log_steps.push(log_logistic(s.a.sign() * g / tau) - s.mu.ln());
        }
    }
    RatioTable::from_log_steps(n, horizon, &log_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Action, StageRecord, Trajectory};
    use crate::policy::{prob_from_index, DEFAULT_TAU};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(id: &str, stages: &[(f64, Action, f64)]) -> Trajectory {
        Trajectory {
            subject: id.into(),
            stages: stages
                .iter()
                .map(|&(x, a, mu)| StageRecord {
                    x: vec![x],
                    a,
                    r: 1.0,
                    mu,
                })
                .collect(),
        }
    }

    #[test]
    fn on_policy_ratios_are_one() {
        let ds = Dataset::new(vec![
            traj("a", &[(0.3, Action::Plus, 0.5), (-1.0, Action::Minus, 0.5)]),
            traj("b", &[(2.0, Action::Minus, 0.5), (0.7, Action::Plus, 0.5)]),
        ])
        .unwrap();
        // g = 0 everywhere, so pi = mu = 0.5
        let r = compute_ratios_raw(&[0.0, 0.0], DEFAULT_TAU, &ds);
        for i in 0..2 {
            for t in 0..=2 {
                assert_eq!(r.rho(i, t), 1.0);
                assert_eq!(r.wbar(t), 1.0);
            }
        }
    }

    #[test]
    fn single_subject_self_normalizes() {
        let ds = Dataset::new(vec![traj(
            "a",
            &[(0.3, Action::Plus, 0.5), (-1.0, Action::Minus, 0.3)],
        )])
        .unwrap();
        let r = compute_ratios_raw(&[0.2, 0.9], 0.5, &ds);
        for t in 1..=2 {
            assert_eq!(r.wbar(t), r.rho(0, t));
            assert_abs_diff_eq!(r.normalized(0, t), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_subject_hand_example() {
        // g / tau = ln 4 gives pi(+1) = 0.8 and pi(-1) = 0.2
        let tau = 1.0;
        let g = 4f64.ln();
        assert_abs_diff_eq!(prob_from_index(g, tau, Action::Plus), 0.8, epsilon = 1e-15);
        let ds = Dataset::new(vec![
            traj("a", &[(0.0, Action::Plus, 0.5)]),
            traj("b", &[(0.0, Action::Minus, 0.5)]),
        ])
        .unwrap();
        let r = compute_ratios_raw(&[g, 0.0], tau, &ds);
        assert_abs_diff_eq!(r.rho(0, 1), 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rho(1, 1), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(r.wbar(1), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_match_direct_product(
            rows in proptest::collection::vec(
                proptest::collection::vec((-3f64..3.0, any::<bool>(), 0.05f64..1.0), 4), 1..12),
            t0 in -1f64..1.0, t1 in -1f64..1.0,
        ) {
            let horizon = 4;
            let trajs: Vec<Trajectory> = rows.iter().enumerate().map(|(i, st)| traj(
                &i.to_string(),
                &st.iter().map(|&(x, plus, mu)| (x, if plus { Action::Plus } else { Action::Minus }, mu)).collect::<Vec<_>>(),
            )).collect();
            let ds = Dataset::new(trajs).unwrap();
            let theta = [t0, t1];
            let tau = 0.7;
            let r = compute_ratios_raw(&theta, tau, &ds);
            for t in 1..=horizon {
                let s: f64 = (0..ds.n()).map(|i| r.normalized(i, t)).sum::<f64>() / ds.n() as f64;
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
            for (i, tr) in ds.trajectories().iter().enumerate() {
                let mut prod = 1.0;
                for (t, s) in tr.stages.iter().enumerate() {
                    prod *= prob_from_index(index_of(&theta, &s.x), tau, s.a) / s.mu;
                    let got = r.rho(i, t + 1);
                    prop_assert!(((got - prod) / prod).abs() < 1e-10);
                    prop_assert!(got > 0.0);
                }
            }
        }
    }
}
