//! Finite-difference derivatives of a loss restricted to the unit sphere.
//!
//! The slopes `theta_1..theta_d` are the free coordinates; every probe point
//! recomputes `theta_0` so that it stays on the sphere. Step sizes shrink
//! near the boundary of the feasible region, one-sided quotients take over
//! when `theta_0 = 0`, and fully degenerate points are replaced by a nearby
//! surrogate.

use crate::error::{Error, Result};
use crate::loss::{Objective, SampleObjective};
use crate::policy::{l2_norm, sgn};

/// Probe points and weights whose weighted sum estimates one derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Stencil {
    /// Positive and negative terms are summed separately, so stencils that
    /// differ only in the order of their points give identical results.
    fn combine(&self, values: impl Iterator<Item = f64>) -> f64 {
        let (mut pos, mut neg) = (0.0, 0.0);
        for (w, v) in self.weights.iter().zip(values) {
            if *w >= 0.0 {
                pos += w * v;
            } else {
                neg += w * v;
            }
        }
        pos + neg
    }

    pub fn apply<O: Objective + ?Sized>(&self, obj: &O) -> f64 {
        self.combine(self.points.iter().map(|p| obj.value(p)))
    }

    /// As [`apply`](Self::apply) through an evaluator anchored near the probes.
    pub fn apply_with(&self, eval: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.combine(self.points.iter().map(|p| eval(p)))
    }

    /// The same quotient applied to every per-subject loss.
    pub fn apply_per_sample<O: SampleObjective + ?Sized>(&self, obj: &O) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self.points.iter().map(|p| obj.per_sample(p)).collect();
        let n = obj.sample_count();
        (0..n)
            .map(|i| self.combine(rows.iter().map(|r| r[i])))
            .collect()
    }
}

/// `1 / sqrt(n T)`, capped at 1.
pub fn base_step(n: usize, horizon: usize) -> f64 {
    (1.0 / ((n * horizon) as f64).sqrt()).min(1.0)
}

fn checked_unit(theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() < 2 {
        return Err(Error::InvalidArgument(
            "theta needs an intercept and at least one slope".into(),
        ));
    }
    let norm = l2_norm(theta);
    if !((norm - 1.0).abs() <= 1e-10) {
        return Err(Error::Domain(format!(
            "theta must be a unit vector, norm is {norm}"
        )));
    }
    Ok(theta.iter().map(|v| v / norm).collect())
}

fn check_coordinate(theta: &[f64], j: usize) -> Result<()> {
    if j == 0 || j >= theta.len() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {j} is not a slope index in 1..{}",
            theta.len() - 1
        )));
    }
    Ok(())
}

/// Fills in `theta_0 = sign * sqrt(1 - sum_{l >= 1} v_l^2)`.
fn on_sphere(mut v: Vec<f64>, sign: f64) -> Result<Vec<f64>> {
    let slopes: f64 = v[1..].iter().map(|x| x * x).sum();
    let room = 1.0 - slopes;
    if room < -1e-12 {
        return Err(Error::Numeric(format!(
            "probe leaves the sphere, slope norm^2 = {slopes}"
        )));
    }
    v[0] = sign * room.max(0.0).sqrt();
    Ok(v)
}

fn moved(theta: &[f64], changes: &[(usize, f64)], sign: f64) -> Result<Vec<f64>> {
    let mut v = theta.to_vec();
    for &(l, x) in changes {
        v[l] = x;
    }
    on_sphere(v, sign)
}

fn slope_sq_except(theta: &[f64], skip: &[usize]) -> f64 {
    (1..theta.len())
        .filter(|l| !skip.contains(l))
        .map(|l| theta[l] * theta[l])
        .sum()
}

/// Surrogate with `theta_0 = 0`, the listed slopes set to `step` and the
/// remaining slopes shrunk to keep unit norm.
fn surrogate(theta: &[f64], set: &[usize], step: f64) -> Vec<f64> {
    let scale = (1.0 - set.len() as f64 * step * step).max(0.0).sqrt();
    let mut v: Vec<f64> = theta.iter().map(|x| x * scale).collect();
    v[0] = 0.0;
    for &l in set {
        v[l] = step;
    }
    let norm = l2_norm(&v);
    v.iter().map(|x| x / norm).collect()
}

/// Quotient for the partial derivative along slope `j` with step `base`.
pub fn gradient_stencil_with_step(theta: &[f64], base: f64, j: usize) -> Result<Stencil> {
    let theta = checked_unit(theta)?;
    check_coordinate(&theta, j)?;
    if !(base > 0.0 && base <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step must lie in (0, 1], got {base}"
        )));
    }
    let sign = sgn(theta[0]);
    let tj = theta[j];
    let room = (1.0 - slope_sq_except(&theta, &[j])).max(0.0).sqrt();
    let h = base.min(room - tj.abs());
    if theta[0] != 0.0 && h > 0.0 {
        let plus = moved(&theta, &[(j, tj + h)], sign)?;
        let minus = moved(&theta, &[(j, tj - h)], sign)?;
        return Ok(Stencil {
            points: vec![plus, minus],
            weights: vec![1.0 / (2.0 * h), -1.0 / (2.0 * h)],
        });
    }
    if tj != 0.0 {
        // one-sided step toward zero frees room for theta_0
        let h = base.min(2.0 * tj.abs());
        let delta = -h * sgn(tj);
        let plus = moved(&theta, &[(j, tj + delta)], sign)?;
        return Ok(Stencil {
            points: vec![plus, theta.clone()],
            weights: vec![1.0 / delta, -1.0 / delta],
        });
    }
    gradient_stencil_with_step(&surrogate(&theta, &[j], base), base, j)
}

pub fn gradient_stencil(theta: &[f64], n: usize, horizon: usize, j: usize) -> Result<Stencil> {
    gradient_stencil_with_step(theta, base_step(n, horizon), j)
}

/// Quotient for the second partial derivative in slopes `j` and `k`.
pub fn hessian_stencil_with_step(theta: &[f64], base: f64, j: usize, k: usize) -> Result<Stencil> {
    let theta = checked_unit(theta)?;
    check_coordinate(&theta, j)?;
    check_coordinate(&theta, k)?;
    if !(base > 0.0 && base <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step must lie in (0, 1], got {base}"
        )));
    }
    let sign = sgn(theta[0]);
    let (tj, tk) = (theta[j], theta[k]);
    if j == k {
        let room = (1.0 - slope_sq_except(&theta, &[j])).max(0.0).sqrt();
        let h = base.min(0.5 * (room - tj.abs()));
        if theta[0] != 0.0 && h > 0.0 {
            let plus = moved(&theta, &[(j, tj + 2.0 * h)], sign)?;
            let mid = moved(&theta, &[], sign)?;
            let minus = moved(&theta, &[(j, tj - 2.0 * h)], sign)?;
            let c = 1.0 / (4.0 * h * h);
            return Ok(Stencil {
                points: vec![plus, mid, minus],
                weights: vec![c, -2.0 * c, c],
            });
        }
        if tj != 0.0 {
            let h = base.min(tj.abs());
            let delta = -h * sgn(tj);
            let far = moved(&theta, &[(j, tj + 2.0 * delta)], sign)?;
            let near = moved(&theta, &[(j, tj + delta)], sign)?;
            let c = 1.0 / (h * h);
            return Ok(Stencil {
                points: vec![far, near, theta.clone()],
                weights: vec![c, -2.0 * c, c],
            });
        }
        return hessian_stencil_with_step(&surrogate(&theta, &[j], base), base, j, j);
    }

    let slopes = slope_sq_except(&theta, &[]).sqrt();
    let h = base.min((1.0 - slopes) / std::f64::consts::SQRT_2);
    if theta[0] != 0.0 && h > 0.0 {
        let pp = moved(&theta, &[(j, tj + h), (k, tk + h)], sign)?;
        let pm = moved(&theta, &[(j, tj + h), (k, tk - h)], sign)?;
        let mp = moved(&theta, &[(j, tj - h), (k, tk + h)], sign)?;
        let mm = moved(&theta, &[(j, tj - h), (k, tk - h)], sign)?;
        let c = 1.0 / (4.0 * h * h);
        return Ok(Stencil {
            points: vec![pp, pm, mp, mm],
            weights: vec![c, -c, -c, c],
        });
    }
    // keeps the other slope away from zero after shrinking
    let step = base.min(std::f64::consts::FRAC_1_SQRT_2);
    match (tj != 0.0, tk != 0.0) {
        (true, true) => {
            let h = base.min(2.0 * tj.abs()).min(2.0 * tk.abs());
            let (dj, dk) = (-h * sgn(tj), -h * sgn(tk));
            let pp = moved(&theta, &[(j, tj + dj), (k, tk + dk)], sign)?;
            let p_ = moved(&theta, &[(j, tj + dj)], sign)?;
            let _p = moved(&theta, &[(k, tk + dk)], sign)?;
            let c = 1.0 / (dj * dk);
            Ok(Stencil {
                points: vec![pp, p_, _p, theta.clone()],
                weights: vec![c, -c, -c, c],
            })
        }
        (false, true) => hessian_stencil_with_step(&surrogate(&theta, &[j], step), base, j, k),
        (true, false) => hessian_stencil_with_step(&surrogate(&theta, &[k], step), base, j, k),
        (false, false) => hessian_stencil_with_step(&surrogate(&theta, &[j, k], step), base, j, k),
    }
}

pub fn hessian_stencil(
    theta: &[f64],
    n: usize,
    horizon: usize,
    j: usize,
    k: usize,
) -> Result<Stencil> {
    hessian_stencil_with_step(theta, base_step(n, horizon), j, k)
}

pub fn numeric_gradient<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    n: usize,
    horizon: usize,
    j: usize,
) -> Result<f64> {
    Ok(gradient_stencil(theta, n, horizon, j)?.apply(obj))
}

pub fn numeric_hessian<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    n: usize,
    horizon: usize,
    j: usize,
    k: usize,
) -> Result<f64> {
    Ok(hessian_stencil(theta, n, horizon, j, k)?.apply(obj))
}

/// Gradient, Hessian and per-subject gradients over all slopes at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereDerivatives {
    /// `grad[k - 1]` is the derivative in slope `k`.
    pub grad: Vec<f64>,
    /// Row-major `d x d`, indexed like `grad`.
    pub hessian: Vec<Vec<f64>>,
    /// `n x d`; row `i` is the gradient of subject `i`'s loss.
    pub per_sample_grad: Vec<Vec<f64>>,
}

impl SphereDerivatives {
    pub fn d(&self) -> usize {
        self.grad.len()
    }
}

/// All first and second slope derivatives of `obj` at `theta`. The step
/// sizes use `n = obj.sample_count()`.
pub fn sphere_derivatives<O: SampleObjective + ?Sized>(
    obj: &O,
    theta: &[f64],
    horizon: usize,
) -> Result<SphereDerivatives> {
    let d = theta.len() - 1;
    let n = obj.sample_count();
    let eval = obj.near(theta);
    let mut grad = Vec::with_capacity(d);
    let mut per_sample_grad = vec![vec![0.0; d]; n];
    for j in 1..=d {
        let st = gradient_stencil(theta, n, horizon, j)?;
        grad.push(st.apply_with(&*eval));
        for (i, g) in st.apply_per_sample(obj).into_iter().enumerate() {
            per_sample_grad[i][j - 1] = g;
        }
    }
    let mut hessian = vec![vec![0.0; d]; d];
    for j in 1..=d {
        for k in j..=d {
            let v = hessian_stencil(theta, n, horizon, j, k)?.apply_with(&*eval);
            hessian[j - 1][k - 1] = v;
            hessian[k - 1][j - 1] = v;
        }
    }
    if grad
        .iter()
        .chain(hessian.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric("non-finite numeric derivative".into()));
    }
    Ok(SphereDerivatives {
        grad,
        hessian,
        per_sample_grad,
    })
}

/// Only the Hessian, for validation folds.
pub fn sphere_hessian<O: SampleObjective + ?Sized>(
    obj: &O,
    theta: &[f64],
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let d = theta.len() - 1;
    let n = obj.sample_count();
    let eval = obj.near(theta);
    let mut hessian = vec![vec![0.0; d]; d];
    for j in 1..=d {
        for k in j..=d {
            let v = hessian_stencil(theta, n, horizon, j, k)?.apply_with(&*eval);
            hessian[j - 1][k - 1] = v;
            hessian[k - 1][j - 1] = v;
        }
    }
    if hessian.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite numeric Hessian".into()));
    }
    Ok(hessian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Fun<F: Fn(&[f64]) -> f64 + Sync>(usize, F);

    impl<F: Fn(&[f64]) -> f64 + Sync> Objective for Fun<F> {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, theta: &[f64]) -> f64 {
            (self.1)(theta)
        }
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = l2_norm(v);
        v.iter().map(|x| x / n).collect()
    }

    fn assert_on_sphere(st: &Stencil) {
        for p in &st.points {
            assert!((l2_norm(p) - 1.0).abs() < 1e-12, "{p:?}");
        }
    }

    /// Smooth test objective with a fixed symmetric matrix and linear term.
    fn quad(theta: &[f64]) -> f64 {
        let d = theta.len();
        let mut v = 0.0;
        for a in 0..d {
            v += (0.3 + 0.1 * a as f64) * theta[a];
            for b in 0..d {
                v += ((a * 7 + b * 7 + a * b) % 5) as f64 * 0.2 * theta[a] * theta[b];
            }
        }
        v
    }

    /// `f` along slope `j` (and `k`) with the intercept compensated.
    fn path(theta: &[f64], changes: &[(usize, f64)]) -> Vec<f64> {
        moved(theta, changes, sgn(theta[0])).unwrap()
    }

    fn degenerate_points() -> Vec<Vec<f64>> {
        vec![
            unit(&[0.6, 0.5, -0.4, 0.3]),
            vec![1.0, 0.0, 0.0, 0.0],
            unit(&[0.0, 0.5, -0.4, 0.3]),
            unit(&[0.0, 0.0, -0.4, 0.3]),
            unit(&[0.0, 0.0, 0.0, 1.0]),
            unit(&[-0.2, 0.0, 0.7, 0.0]),
            unit(&[1e-9, 0.8, 0.6, 0.0]),
        ]
    }

    #[test]
    fn probes_stay_on_the_sphere_in_every_branch() {
        for theta in degenerate_points() {
            for j in 1..4 {
                assert_on_sphere(&gradient_stencil(&theta, 50, 2, j).unwrap());
                for k in 1..4 {
                    assert_on_sphere(&hessian_stencil(&theta, 50, 2, j, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn full_size_steps_terminate_on_the_sphere() {
        for theta in degenerate_points() {
            for j in 1..4 {
                assert_on_sphere(&gradient_stencil(&theta, 1, 1, j).unwrap());
                for k in 1..4 {
                    assert_on_sphere(&hessian_stencil(&theta, 1, 1, j, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn constant_objective_has_zero_derivatives() {
        let f = Fun(4, |_: &[f64]| 3.25);
        for theta in degenerate_points() {
            for j in 1..4 {
                assert_eq!(numeric_gradient(&f, &theta, 100, 1, j).unwrap(), 0.0);
                for k in 1..4 {
                    assert_eq!(numeric_hessian(&f, &theta, 100, 1, j, k).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn intercept_axis_uses_the_full_symmetric_step() {
        let theta = vec![1.0, 0.0, 0.0];
        let st = gradient_stencil(&theta, 4, 1, 1).unwrap();
        assert_eq!(st.points[0][1], 0.5);
        assert_eq!(st.points[1][1], -0.5);
        assert_on_sphere(&st);
        let st = gradient_stencil(&theta, 1, 1, 2).unwrap();
        assert_eq!(st.points[0], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn one_sided_quotients_are_exact_for_slope_linear_objectives() {
        // no dependence on theta_0, so the compensation is invisible
        let f = Fun(4, |t: &[f64]| 2.0 * t[1] - 3.0 * t[2] + 0.5 * t[3]);
        let coef = [0.0, 2.0, -3.0, 0.5];
        for theta in [unit(&[0.0, 0.5, -0.4, 0.3]), unit(&[0.0, 0.0, -0.4, 0.3])] {
            for j in 1..4 {
                let g = numeric_gradient(&f, &theta, 400, 1, j).unwrap();
                assert!((g - coef[j]).abs() < 1e-9, "j={j}: {g}");
            }
        }
        let f = Fun(4, |t: &[f64]| t[1] * t[2] + 0.5 * t[3] * t[3]);
        let theta = unit(&[0.0, 0.5, -0.4, 0.3]);
        assert!((numeric_hessian(&f, &theta, 400, 1, 1, 2).unwrap() - 1.0).abs() < 1e-8);
        assert!((numeric_hessian(&f, &theta, 400, 1, 3, 3).unwrap() - 1.0).abs() < 1e-8);
        assert!(numeric_hessian(&f, &theta, 400, 1, 1, 1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_the_tangential_derivative() {
        let f = Fun(4, quad);
        let theta = unit(&[0.6, 0.5, -0.4, 0.3]);
        for j in 1..4 {
            // d/dt f along theta_j with theta_0 compensated
            let eps = 1e-6;
            let analytic = (quad(&path(&theta, &[(j, theta[j] + eps)]))
                - quad(&path(&theta, &[(j, theta[j] - eps)])))
                / (2.0 * eps);
            let g = numeric_gradient(&f, &theta, 1_000_000, 1, j).unwrap();
            assert!((g - analytic).abs() < 1e-5, "j={j}: {g} vs {analytic}");
            let coarse = gradient_stencil_with_step(&theta, 2e-3, j)
                .unwrap()
                .apply(&f);
            let fine = gradient_stencil_with_step(&theta, 1e-3, j)
                .unwrap()
                .apply(&f);
            let richardson = (4.0 * fine - coarse) / 3.0;
            assert!((fine - richardson).abs() < 1e-5);
        }
    }

    #[test]
    fn hessian_matches_a_refined_quotient() {
        let f = Fun(4, quad);
        let theta = unit(&[0.6, 0.5, -0.4, 0.3]);
        for j in 1..4 {
            for k in 1..4 {
                let at = |h: f64| {
                    hessian_stencil_with_step(&theta, h, j, k)
                        .unwrap()
                        .apply(&f)
                };
                let (coarse, fine) = (at(2e-2), at(1e-2));
                let refined = (4.0 * fine - coarse) / 3.0;
                let got = numeric_hessian(&f, &theta, 10_000, 1, j, k).unwrap();
                assert!(
                    (got - refined).abs() <= 1e-3 * refined.abs().max(1.0),
                    "({j},{k}): {got} vs {refined}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn mixed_hessian_is_exactly_symmetric(raw in prop::collection::vec(-1.0f64..1.0, 5), n in 1usize..5000) {
            prop_assume!(raw[0].abs() > 1e-3);
            let theta = unit(&raw);
            let f = Fun(5, quad);
            for j in 1..5 {
                for k in 1..5 {
                    let a = numeric_hessian(&f, &theta, n, 1, j, k).unwrap();
                    let b = numeric_hessian(&f, &theta, n, 1, k, j).unwrap();
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }

        #[test]
        fn probes_are_unit_norm(raw in prop::collection::vec(-1.0f64..1.0, 4), zeros in prop::collection::vec(any::<bool>(), 4), n in 1usize..1000, horizon in 1usize..4) {
            let mut v = raw.clone();
            for (x, z) in v.iter_mut().zip(&zeros) {
                if *z { *x = 0.0; }
            }
            prop_assume!(l2_norm(&v) > 1e-3);
            let theta = unit(&v);
            for j in 1..4 {
                for p in gradient_stencil(&theta, n, horizon, j).unwrap().points {
                    prop_assert!((l2_norm(&p) - 1.0).abs() < 1e-12);
                }
                for k in 1..4 {
                    for p in hessian_stencil(&theta, n, horizon, j, k).unwrap().points {
                        prop_assert!((l2_norm(&p) - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_non_unit_and_bad_index() {
        assert!(gradient_stencil(&[1.0, 1.0], 10, 1, 1).is_err());
        assert!(gradient_stencil(&[1.0, 0.0], 10, 1, 0).is_err());
        assert!(gradient_stencil(&[1.0, 0.0], 10, 1, 2).is_err());
    }
}
