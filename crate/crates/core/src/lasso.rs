//! Cyclic coordinate descent for l1-penalized least squares.
//!
//! Objective convention, used everywhere in this crate:
//!
//! ```text
//! (1/n) ||y - X b||^2 + lambda * sum_j w_j |b_j|
//! ```
//!
//! with per-coordinate penalty factors `w_j` (1 by default, 0 leaves a
//! coordinate unpenalized). The solver works on the Gram matrix `X'X / n`,
//! so each coordinate update costs `O(p)` after an `O(n p^2)` setup.

use crate::error::{Error, Result};

/// `sgn(z) * max(|z| - lambda, 0)`.
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    let m = z.abs() - lambda;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// A dense design matrix stored row-major (`n` rows, `p` columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("empty design matrix".into()));
        }
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::Dimension {
                    expected: p,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Design { n, p, data })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows selected by index, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Design {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Design {
            n: idx.len(),
            p: self.p,
            data,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoProblem {
    pub design: Design,
    pub response: Vec<f64>,
    pub lambda: f64,
    /// Per-coordinate penalty multipliers; empty means all ones.
    pub penalty_factors: Vec<f64>,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl LassoProblem {
    pub fn new(design: Design, response: Vec<f64>, lambda: f64) -> Self {
        LassoProblem {
            design,
            response,
            lambda,
            penalty_factors: Vec::new(),
            max_sweeps: 100_000,
            tolerance: 1e-8,
        }
    }

    fn factor(&self, j: usize) -> f64 {
        self.penalty_factors.get(j).copied().unwrap_or(1.0)
    }

    /// Penalized objective at `beta`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        mse(&self.design, &self.response, beta)
            + self.lambda
                * beta
                    .iter()
                    .enumerate()
                    .map(|(j, b)| self.factor(j) * b.abs())
                    .sum::<f64>()
    }

    /// `(2/n) X'(y - X beta)`, the negative smooth gradient.
    pub fn correlation(&self, beta: &[f64]) -> Vec<f64> {
        let n = self.design.nrows() as f64;
        let fit = self.design.predict(beta);
        let mut c = vec![0.0; self.design.ncols()];
        for i in 0..self.design.nrows() {
            let r = self.response[i] - fit[i];
            for (cj, xij) in c.iter_mut().zip(self.design.row(i)) {
                *cj += 2.0 * xij * r / n;
            }
        }
        c
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, beta: &[f64]) -> f64 {
        let c = self.correlation(beta);
        c.iter()
            .enumerate()
            .map(|(j, &cj)| {
                let lam = self.lambda * self.factor(j);
                if beta[j] == 0.0 {
                    (cj.abs() - lam).max(0.0)
                } else {
                    (cj - lam * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `max_j |(2/n) x_j'(y - mean(y))|` over penalized columns; at or above
    /// this value only unpenalized coordinates can be nonzero when the
    /// unpenalized set is a single intercept column of ones.
    pub fn lambda_max(&self) -> f64 {
        let n = self.design.nrows() as f64;
        let has_free = (0..self.design.ncols()).any(|j| self.factor(j) == 0.0);
        let ybar = if has_free {
            self.response.iter().sum::<f64>() / n
        } else {
            0.0
        };
        let mut c = vec![0.0; self.design.ncols()];
        for i in 0..self.design.nrows() {
            let r = self.response[i] - ybar;
            for (cj, xij) in c.iter_mut().zip(self.design.row(i)) {
                *cj += 2.0 * xij * r / n;
            }
        }
        c.iter()
            .enumerate()
            .filter(|(j, _)| self.factor(*j) > 0.0)
            .map(|(j, cj)| cj.abs() / self.factor(j))
            .fold(0.0, f64::max)
    }
}

pub fn mse(design: &Design, y: &[f64], beta: &[f64]) -> f64 {
    let fit = design.predict(beta);
    y.iter()
        .zip(&fit)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Precomputed `X'X / n` and `X'y / n` for repeated solves on one design.
#[derive(Clone, Debug)]
pub struct GramLasso {
    p: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
}

impl GramLasso {
    pub fn new(design: &Design, y: &[f64]) -> Result<Self> {
        if y.len() != design.nrows() {
            return Err(Error::Dimension {
                expected: design.nrows(),
                got: y.len(),
            });
        }
        if design.data.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in lasso problem".into()));
        }
        let (n, p) = (design.nrows(), design.ncols());
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for i in 0..n {
            let row = design.row(i);
            for j in 0..p {
                xty[j] += row[j] * y[i];
                for k in j..p {
                    gram[j * p + k] += row[j] * row[k];
                }
            }
        }
        let nf = n as f64;
        for j in 0..p {
            xty[j] /= nf;
            for k in j..p {
                let v = gram[j * p + k] / nf;
                gram[j * p + k] = v;
                gram[k * p + j] = v;
            }
        }
        Ok(GramLasso { p, gram, xty })
    }

    /// Runs cyclic coordinate descent until the largest coordinate change in
    /// a sweep drops below `tolerance`.
    pub fn solve(
        &self,
        lambda: f64,
        factors: &[f64],
        warm: Option<&[f64]>,
        max_sweeps: usize,
        tolerance: f64,
    ) -> Result<LassoFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let p = self.p;
        let mut beta = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            Some(w) => {
                return Err(Error::Dimension {
                    expected: p,
                    got: w.len(),
                })
            }
            None => vec![0.0; p],
        };
        // q = X'(y - X beta) / n
        let mut q = self.xty.clone();
        for k in 0..p {
            if beta[k] != 0.0 {
                for j in 0..p {
                    q[j] -= self.gram[j * p + k] * beta[k];
                }
            }
        }
        let factor = |j: usize| factors.get(j).copied().unwrap_or(1.0);
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < max_sweeps {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let a = self.gram[j * p + j];
                if a <= 0.0 {
                    if beta[j] != 0.0 {
                        beta[j] = 0.0;
                    }
                    continue;
                }
                let c = q[j] + a * beta[j];
                let new = soft_threshold(c, 0.5 * lambda * factor(j)) / a;
                let delta = new - beta[j];
                if delta != 0.0 {
                    for (k, qk) in q.iter_mut().enumerate() {
                        *qk -= self.gram[k * p + j] * delta;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs() * a.sqrt());
                }
            }
            if max_change < tolerance {
                converged = true;
                break;
            }
        }
        Ok(LassoFit {
            beta,
            converged,
            sweeps,
        })
    }
}

/// Solves one lasso problem, optionally from a warm start.
pub fn solve_lasso(prob: &LassoProblem, warm: Option<&[f64]>) -> Result<LassoFit> {
    GramLasso::new(&prob.design, &prob.response)?.solve(
        prob.lambda,
        &prob.penalty_factors,
        warm,
        prob.max_sweeps,
        prob.tolerance,
    )
}

/// `count` log-spaced values from `hi` down to `hi * ratio`.
pub fn log_grid(hi: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), (hi * ratio).ln());
    (0..count)
        .map(|k| (lh + (ll - lh) * k as f64 / (count - 1) as f64).exp())
        .collect()
}
