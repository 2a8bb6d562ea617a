//! Logistic stationary policies indexed by a unit-norm parameter.
//!
//! A policy assigns `+1` with probability `1 / (1 + exp(-g / tau))` where
//! `g = theta_0 + sum_j x_j theta_j`. The same rule is used at every stage.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, Action};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default temperature.
pub const DEFAULT_TAU: f64 = 0.1;

const UNIT_TOL: f64 = 1e-10;

/// Sign with the tie-break `sgn(0) = +1`.
pub fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 / (1 + e^{-u})` without overflow for any finite `u`.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(u))`, stable for large `|u|`.
pub fn log_logistic(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// `theta_0 + sum_j x_j theta_j` for a raw (not necessarily unit) parameter.
pub fn index_of(theta: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(theta.len(), x.len() + 1);
    theta[0] + theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
}

/// Probability of `a` given linear index `g` and temperature `tau`.
pub fn prob_from_index(g: f64, tau: f64, a: Action) -> f64 {
    logistic(a.sign() * g / tau)
}

/// Returns `v / ||v||_2`.
pub fn normalize_to_sphere(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize a vector of norm {norm}"
        )));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// A unit-norm policy parameter with its temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    theta: Vec<f64>,
    tau: f64,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>, tau: f64) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidArgument(
                "theta needs an intercept and at least one slope".into(),
            ));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {tau}"
            )));
        }
        let norm = l2_norm(&theta);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "theta must have unit norm, got {norm}"
            )));
        }
        Ok(PolicyParams { theta, tau })
    }

    /// Normalizes `v` onto the sphere first.
    pub fn from_direction(v: &[f64], tau: f64) -> Result<Self> {
        Self::new(normalize_to_sphere(v)?, tau)
    }

    /// Pads `head` with zeros to dimension `d + 1` and normalizes.
    pub fn padded(head: &[f64], d: usize, tau: f64) -> Result<Self> {
        let mut v = vec![0.0; d + 1];
        v[..head.len()].copy_from_slice(head);
        Self::from_direction(&v, tau)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Feature dimension `d` (theta has `d + 1` entries).
    pub fn d(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn linear_index(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::Dimension {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(index_of(&self.theta, x))
    }

    pub fn action_probability(&self, x: &[f64], a: Action) -> Result<f64> {
        Ok(prob_from_index(self.linear_index(x)?, self.tau, a))
    }

    pub fn sample_action(&self, x: &[f64], rng: &mut Rng) -> Result<Action> {
        let p = self.action_probability(x, Action::Plus)?;
        Ok(if rng.gen::<f64>() < p {
            Action::Plus
        } else {
            Action::Minus
        })
    }

    /// `{"tau": ..., "theta": [...]}` with 17 significant digits.
    pub fn to_json(&self) -> String {
        let theta: Vec<String> = self.theta.iter().map(|&v| fmt_f64(v)).collect();
        format!(
            "{{\"tau\": {}, \"theta\": [{}]}}\n",
            fmt_f64(self.tau),
            theta.join(", ")
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PolicyParams = serde_json::from_str(text)?;
        Self::new(raw.theta, raw.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn params(v: &[f64]) -> PolicyParams {
        PolicyParams::from_direction(v, DEFAULT_TAU).unwrap()
    }

    #[test]
    fn linear_index_examples() {
        assert_eq!(
            params(&[1.0, 0.0, 0.0]).linear_index(&[5.0, -3.0]).unwrap(),
            1.0
        );
        assert_eq!(
            params(&[0.0, 1.0, 0.0]).linear_index(&[2.0, 9.0]).unwrap(),
            2.0
        );
        // raw arithmetic with the rounded optimum of scenario 1
        assert_abs_diff_eq!(
            index_of(&[-0.39, 0.68, -0.62], &[1.0, 1.0]),
            -0.33,
            epsilon = 1e-12
        );
        assert!(matches!(
            params(&[1.0, 0.0, 0.0]).linear_index(&[1.0]),
            Err(Error::Dimension {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn action_probability_examples() {
        let p = params(&[0.0, 1.0]);
        assert_eq!(p.action_probability(&[0.0], Action::Plus).unwrap(), 0.5);
        assert_eq!(p.action_probability(&[0.0], Action::Minus).unwrap(), 0.5);
        // g / tau = 40
        assert_abs_diff_eq!(
            prob_from_index(4.0, 0.1, Action::Plus),
            1.0,
            epsilon = 1e-12
        );
        // no overflow far out
        assert_eq!(prob_from_index(1e3, 0.1, Action::Minus), 0.0);
        assert_eq!(prob_from_index(-1e3, 0.1, Action::Plus), 0.0);
        assert!(log_logistic(-1e4).is_finite());
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = Rng::seed_from_u64(3);
        let p = params(&[0.0, 1.0]);
        let plus = (0..10_000)
            .filter(|_| p.sample_action(&[4.0], &mut rng).unwrap() == Action::Plus)
            .count();
        assert!(plus as f64 / 1e4 >= 0.999);
        let plus = (0..100_000)
            .filter(|_| p.sample_action(&[0.0], &mut rng).unwrap() == Action::Plus)
            .count();
        let f = plus as f64 / 1e5;
        assert!((0.48..=0.52).contains(&f), "{f}");

        let draw = |seed| {
            let mut r = Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| p.sample_action(&[0.05], &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn sampling_passes_chi_square() {
        // one degree of freedom; the 0.001 upper quantile is 10.83
        let mut rng = Rng::seed_from_u64(17);
        let p = params(&[0.3, 0.7]);
        let x = [0.1];
        let prob = p.action_probability(&x, Action::Plus).unwrap();
        let n = 100_000.0;
        let plus = (0..100_000)
            .filter(|_| p.sample_action(&x, &mut rng).unwrap() == Action::Plus)
            .count() as f64;
        let chi2 = (plus - n * prob).powi(2) / (n * prob)
            + (n - plus - n * (1.0 - prob)).powi(2) / (n * (1.0 - prob));
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_to_sphere(&[3.0, 4.0, 0.0]).unwrap(),
            vec![0.6, 0.8, 0.0]
        );
        assert_eq!(
            normalize_to_sphere(&[-2.0, 0.0, 0.0]).unwrap(),
            vec![-1.0, 0.0, 0.0]
        );
        assert_eq!(normalize_to_sphere(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(normalize_to_sphere(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn params_validation_and_json() {
        assert!(PolicyParams::new(vec![1.0, 0.1], 0.1).is_err());
        assert!(PolicyParams::new(vec![1.0, 0.0], 0.0).is_err());
        let p = params(&[-0.39, 0.68, -0.62]);
        assert_eq!(PolicyParams::from_json(&p.to_json()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn complementary_probabilities(g in -1e3f64..1e3, tau in 1e-3f64..10.0) {
            let s = prob_from_index(g, tau, Action::Plus) + prob_from_index(g, tau, Action::Minus);
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn scale_invariance(g in -50f64..50.0, tau in 0.01f64..5.0, c in 0.1f64..10.0) {
            let a = prob_from_index(g, tau, Action::Plus);
            let b = prob_from_index(c * g, c * tau, Action::Plus);
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
