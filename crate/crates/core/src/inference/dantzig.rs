//! Dantzig selector for the decorrelation vector, solved as a linear program.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationFit {
    /// Slope index the vector decorrelates (1-based).
    pub j: usize,
    pub w_hat: Vec<f64>,
    pub lambda_w: f64,
    /// `||c - H w_hat||_inf`.
    pub residual: f64,
}

fn residual(h: &[Vec<f64>], c: &[f64], w: &[f64]) -> f64 {
    h.iter()
        .zip(c)
        .map(|(row, ci)| (ci - row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

fn check_shapes(h: &[Vec<f64>], c: &[f64]) -> Result<()> {
    let m = c.len();
    if h.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: h.len(),
        });
    }
    if let Some(row) = h.iter().find(|r| r.len() != m) {
        return Err(Error::Dimension {
            expected: m,
            got: row.len(),
        });
    }
    if h.iter().flatten().chain(c).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "non-finite entry in the Dantzig program".into(),
        ));
    }
    Ok(())
}

/// Smallest `lambda` for which `||c - H w||_inf <= lambda` is feasible.
pub fn min_feasible_lambda(h: &[Vec<f64>], c: &[f64]) -> Result<f64> {
    check_shapes(h, c)?;
    let m = c.len();
    if m == 0 {
        return Ok(0.0);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..m)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    for r in 0..m {
        // c_r - H_r w <= t  and  H_r w - c_r <= t
        let mut lo: Vec<_> = w.iter().zip(&h[r]).map(|(&v, &a)| (v, a)).collect();
        lo.push((t, 1.0));
        lp.add_constraint(lo, ComparisonOp::Ge, c[r]);
        let mut hi: Vec<_> = w.iter().zip(&h[r]).map(|(&v, &a)| (v, a)).collect();
        hi.push((t, -1.0));
        lp.add_constraint(hi, ComparisonOp::Le, c[r]);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Numeric(format!("Chebyshev program failed: {e}")))?;
    Ok(*sol.var_value(t))
}

/// `argmin ||w||_1` subject to `||c - H w||_inf <= lambda_w`.
pub fn dantzig_solve(h: &[Vec<f64>], c: &[f64], lambda_w: f64) -> Result<DecorrelationFit> {
    check_shapes(h, c)?;
    if !(lambda_w >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_w must be non-negative, got {lambda_w}"
        )));
    }
    let m = c.len();
    let c_inf = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if lambda_w >= c_inf {
        return Ok(DecorrelationFit {
            j: 0,
            w_hat: vec![0.0; m],
            lambda_w,
            residual: c_inf,
        });
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let plus: Vec<_> = (0..m)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let minus: Vec<_> = (0..m)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for r in 0..m {
        let mut expr = Vec::with_capacity(2 * m);
        for i in 0..m {
            if h[r][i] != 0.0 {
                expr.push((plus[i], h[r][i]));
                expr.push((minus[i], -h[r][i]));
            }
        }
        lp.add_constraint(expr.clone(), ComparisonOp::Ge, c[r] - lambda_w);
        lp.add_constraint(expr, ComparisonOp::Le, c[r] + lambda_w);
    }
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => {
            let min_feasible = min_feasible_lambda(h, c)?;
            return Err(Error::DantzigInfeasible {
                lambda: lambda_w,
                min_feasible,
            });
        }
        Err(e) => return Err(Error::Numeric(format!("Dantzig program failed: {e}"))),
    };
    let w_hat: Vec<f64> = (0..m)
        .map(|i| sol.var_value(plus[i]) - sol.var_value(minus[i]))
        .collect();
    let residual = residual(h, c, &w_hat);
    Ok(DecorrelationFit {
        j: 0,
        w_hat,
        lambda_w,
        residual,
    })
}

/// `grad_j - w^T grad_nu`.
pub fn decorrelated_score(grad_j: f64, grad_nu: &[f64], w_hat: &[f64]) -> f64 {
    grad_j - grad_nu.iter().zip(w_hat).map(|(g, w)| g * w).sum::<f64>()
}
