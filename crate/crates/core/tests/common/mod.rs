//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use mstp::lasso::{mse, Design};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric positive definite `m x m` matrix.
pub fn random_spd(r: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    let a = DMatrix::from_fn(m, m, |_, _| r.gen_range(-1.0..1.0));
    let h = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.1;
    (0..m)
        .map(|i| (0..m).map(|j| h[(i, j)]).collect())
        .collect()
}

/// Brute-force Dantzig selector: every `m`-subset of the hyperplanes
/// `H_r w = c_r +- lambda` and `w_i = 0` is solved, and the feasible point
/// with the smallest L1 norm wins. Returns `(objective, w)`.
pub fn dantzig_vertex_oracle(h: &[Vec<f64>], c: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let m = c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::with_capacity(3 * m);
    for r in 0..m {
        planes.push((h[r].clone(), c[r] + lambda));
        planes.push((h[r].clone(), c[r] - lambda));
    }
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        planes.push((e, 0.0));
    }
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let a = DMatrix::from_fn(m, m, |i, j| planes[idx[i]].0[j]);
        let b = DVector::from_fn(m, |i, _| planes[idx[i]].1);
        if let Some(w) = a.clone().lu().solve(&b) {
            let w: Vec<f64> = w.iter().copied().collect();
            let resid = (0..m)
                .map(|r| (c[r] - h[r].iter().zip(&w).map(|(x, y)| x * y).sum::<f64>()).abs())
                .fold(0.0, f64::max);
            let l1: f64 = w.iter().map(|v| v.abs()).sum();
            if w.iter().all(|v| v.is_finite()) && resid <= lambda + 1e-9 && l1 < best.0 {
                best = (l1, w);
            }
        }
        // next m-subset of 0..3m in lexicographic order
        let n = planes.len();
        let mut k = m;
        while k > 0 && idx[k - 1] == n - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for t in k..m {
            idx[t] = idx[t - 1] + 1;
        }
    }
    best
}

/// Proximal gradient (ISTA) for `mse + lambda * sum f_j |beta_j|`.
pub fn ista(design: &Design, y: &[f64], lambda: f64, factors: &[f64], iters: usize) -> Vec<f64> {
    let (n, p) = (design.nrows(), design.ncols());
    let x = DMatrix::from_fn(n, p, |i, j| design.get(i, j));
    // Lipschitz constant of the gradient of mse
    let lip = 2.0 * (x.transpose() * &x).symmetric_eigenvalues().max() / n as f64;
    let step = 1.0 / lip;
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(p);
    for _ in 0..iters {
        let grad = x.transpose() * (&x * &beta - &yv) * (2.0 / n as f64);
        let z = &beta - grad * step;
        beta = DVector::from_fn(p, |j, _| {
            let t = step * lambda * factors[j];
            z[j].signum() * (z[j].abs() - t).max(0.0)
        });
    }
    beta.iter().copied().collect()
}

pub fn penalized(design: &Design, y: &[f64], lambda: f64, factors: &[f64], beta: &[f64]) -> f64 {
    mse(design, y, beta)
        + lambda
            * beta
                .iter()
                .zip(factors)
                .map(|(b, f)| f * b.abs())
                .sum::<f64>()
}

pub fn random_design(r: &mut ChaCha8Rng, n: usize, p: usize) -> (Design, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let truth: Vec<f64> = (0..p)
        .map(|j| if j < 2 { 1.5 - j as f64 } else { 0.0 })
        .collect();
    let y = rows
        .iter()
        .map(|row| {
            row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3 * r.gen_range(-1.0..1.0)
        })
        .collect();
    (Design::from_rows(&rows).unwrap(), y)
}
