//! ISTA and FISTA for the LASSO objective `1/2 ||y - Phi x||^2 + lambda ||x||_1`.

use crate::error::{shape_err, Error, Result};
use crate::numerics::tensor::{l1, shrink};
use crate::numerics::{lipschitz_constant, Tensor};
use crate::problems::support_sizes;

use super::trace::{IterationTrace, StepRecord};

/// Regularization weight used for the classical baselines.
pub const DEFAULT_LAMBDA: f64 = 0.4;

/// Per-row LASSO objective.
pub fn lasso_objective(phi: &Tensor, y: &Tensor, x: &Tensor, lambda: f64) -> Result<Vec<f64>> {
    let res = x.matmul_nt(phi)?.sub(&y.as_matrix())?;
    Ok((0..x.rows())
        .map(|i| {
            let r = res.row(i);
            0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * l1(x.row(i))
        })
        .collect())
}

struct Gradient {
    /// `Phi^T (Phi x - y)` per row, `B x N`
    grad: Tensor,
    r: Vec<f64>,
    u: Vec<f64>,
}

fn gradient(phi: &Tensor, y: &Tensor, x: &Tensor) -> Result<Gradient> {
    let res = x.matmul_nt(phi)?.sub(y)?;
    let grad = res.matmul(phi)?;
    let r = (0..res.rows()).map(|i| l1(res.row(i))).collect();
    let u = (0..grad.rows()).map(|i| l1(grad.row(i))).collect();
    Ok(Gradient { grad, r, u })
}

fn check(phi: &Tensor, y: &Tensor, lambda: f64, k: usize) -> Result<Tensor> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    if k == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    let y = y.as_matrix();
    if y.cols() != phi.rows() {
        return shape_err(format!("observations have {} columns, M = {}", y.cols(), phi.rows()));
    }
    Ok(y)
}

/// `x <- eta_{lambda/L}(x + (1/L) Phi^T (y - Phi x))` from `x = 0`.
pub fn ista_run(phi: &Tensor, y: &Tensor, lambda: f64, k: usize) -> Result<IterationTrace> {
    let y = check(phi, y, lambda, k)?;
    let lip = lipschitz_constant(phi)?;
    let (step, theta) = (1.0 / lip, lambda / lip);
    let b = y.rows();
    let mut x = Tensor::zeros(b, phi.cols());
    let mut trace = IterationTrace::default();
    for _ in 0..k {
        let g = gradient(phi, &y, &x)?;
        let next = x.zip_map(&g.grad, |xi, gi| shrink(xi - step * gi, theta))?;
        trace.steps.push(record(next.clone(), g, theta, step, b));
        x = next;
    }
    Ok(trace)
}

/// ISTA steps taken at Nesterov-extrapolated points with
/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`, `t_1 = 1`.
pub fn fista_run(phi: &Tensor, y: &Tensor, lambda: f64, k: usize) -> Result<IterationTrace> {
    let y = check(phi, y, lambda, k)?;
    let lip = lipschitz_constant(phi)?;
    let (step, theta) = (1.0 / lip, lambda / lip);
    let b = y.rows();
    let mut x = Tensor::zeros(b, phi.cols());
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut trace = IterationTrace::default();
    for _ in 0..k {
        let g = gradient(phi, &y, &z)?;
        let next = z.zip_map(&g.grad, |zi, gi| shrink(zi - step * gi, theta))?;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        z = next.zip_map(&x, |a, b| a + momentum * (a - b))?;
        trace.steps.push(record(next.clone(), g, theta, step, b));
        x = next;
        t = t_next;
    }
    Ok(trace)
}

fn record(x: Tensor, g: Gradient, theta: f64, gamma: f64, b: usize) -> StepRecord {
    StepRecord {
        support: support_sizes(&x),
        x,
        r: g.r,
        u: g.u,
        theta: vec![theta; b],
        gamma: vec![gamma; b],
        l1_error: None,
        l2_error: None,
    }
}
