//! Damped Newton iteration with finite-difference derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::trace::OptimizationTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Stop once the gradient ∞-norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative central-difference step for the gradient.
    pub grad_step: f64,
    /// Relative step for the Hessian.
    pub hess_step: f64,
    /// Largest allowed ∞-norm of a single step.
    pub max_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-4,
            max_iters: 100,
            grad_step: 1e-5,
            hess_step: 1e-4,
            max_step: 2.0,
        }
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

fn eval<F>(f: &F, x: &DVector<f64>) -> f64
where
    F: Fn(&[f64]) -> Result<f64>,
{
    match f(x.as_slice()) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NAN,
    }
}

fn gradient<F>(f: &F, x: &DVector<f64>, rel: f64) -> DVector<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    DVector::from_fn(x.len(), |i, _| {
        let h = rel * x[i].abs().max(1.0);
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[i] += h;
        lo[i] -= h;
        (eval(f, &hi) - eval(f, &lo)) / (hi[i] - lo[i])
    })
}

fn hessian<F>(f: &F, x: &DVector<f64>, fx: f64, rel: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let steps: Vec<f64> = (0..n).map(|i| rel * x[i].abs().max(1.0)).collect();
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.clone();
        for &(i, d) in moves {
            y[i] += d;
        }
        eval(f, &y)
    };
    let mut hm = DMatrix::zeros(n, n);
    for i in 0..n {
        let h = steps[i];
        hm[(i, i)] = (shifted(&[(i, h)]) - 2.0 * fx + shifted(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let k = steps[j];
            let v = (shifted(&[(i, h), (j, k)]) - shifted(&[(i, h), (j, -k)]) - shifted(&[(i, -h), (j, k)])
                + shifted(&[(i, -h), (j, -k)]))
                / (4.0 * h * k);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// Newton direction with the Hessian made positive definite by replacing
/// each eigenvalue with its magnitude (bounded away from zero).
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(hess.clone());
    let scale = eig.eigenvalues.amax().max(1e-12);
    let inv = eig.eigenvalues.map(|l| 1.0 / l.abs().max(1e-8 * scale));
    let v = &eig.eigenvectors;
    Some(-(v * DMatrix::from_diagonal(&inv) * v.transpose() * grad))
}

fn clamp_step(mut d: DVector<f64>, max_step: f64) -> DVector<f64> {
    let m = d.amax();
    if m > max_step {
        d *= max_step / m;
    }
    d
}

/// Backtracking line search along `d`; returns the accepted point and value.
fn line_search<F>(f: &F, x: &DVector<f64>, fx: f64, g: &DVector<f64>, d: &DVector<f64>) -> Option<(DVector<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let slope = g.dot(d);
    let mut alpha = 1.0;
    for _ in 0..MAX_HALVINGS {
        let trial = x + d * alpha;
        let ft = eval(f, &trial);
        if ft.is_finite() && ft <= fx + ARMIJO * alpha * slope.min(0.0) && ft <= fx {
            return Some((trial, ft));
        }
        alpha *= 0.5;
    }
    None
}

/// Minimizes `f` from `x0`, returning the best point seen and its trace.
///
/// Each iteration takes a regularized Newton step with a backtracking line
/// search, falling back to steepest descent when the Newton direction makes
/// no progress. Stops on a small gradient, on `max_iters`, or when neither
/// direction decreases `f`.
pub fn newton_optimize<F>(f: F, x0: &[f64], cfg: &NewtonConfig) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = DVector::from_column_slice(x0);
    let mut fx = match f(x0) {
        Ok(v) if v.is_finite() => v,
        Ok(v) => {
            return Err(Error::Optimization {
                iterations: 0,
                reason: format!("objective is {v} at the starting point"),
            })
        }
        Err(e) => {
            return Err(Error::Optimization {
                iterations: 0,
                reason: format!("objective failed at the starting point: {e}"),
            })
        }
    };
    let mut trace = OptimizationTrace::default();
    trace.push(0, fx, x.as_slice());
    for it in 1..=cfg.max_iters {
        let g = gradient(&f, &x, cfg.grad_step);
        if g.iter().any(|v| !v.is_finite()) {
            if it == 1 {
                return Err(Error::Optimization {
                    iterations: it,
                    reason: "objective is not finite around the starting point".into(),
                });
            }
            break;
        }
        if g.amax() < cfg.tol {
            break;
        }
        let h = hessian(&f, &x, fx, cfg.hess_step);
        let newton = newton_direction(&h, &g)
            .map(|d| clamp_step(d, cfg.max_step))
            .and_then(|d| line_search(&f, &x, fx, &g, &d));
        let accepted = newton.or_else(|| {
            let d = clamp_step(-&g, cfg.max_step);
            line_search(&f, &x, fx, &g, &d)
        });
        match accepted {
            Some((xn, fxn)) => {
                x = xn;
                fx = fxn;
                trace.push(it, fx, x.as_slice());
            }
            None => break,
        }
    }
    Ok((x.as_slice().to_vec(), trace))
}
