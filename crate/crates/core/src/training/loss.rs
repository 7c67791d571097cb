use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::problems::Batch;
use crate::solvers::{unroll, ForwardOptions, Model, Operators, SupportSelectionSchedule};

/// Reported NMSE for exact recovery.
pub const NMSE_FLOOR_DB: f64 = -150.0;

/// `(1/B) sum_i ||x_i - x*_i||^2` recorded on `tape`.
pub fn mse_loss(tape: &mut Tape, x: Var, target: Var) -> Result<Var> {
    let b = tape.value(x).rows();
    let diff = tape.sub(x, target)?;
    let sq = tape.squared_norm(diff);
    Ok(tape.scale(sq, 1.0 / b as f64))
}

/// Eager counterpart of [`mse_loss`].
pub fn mse(x: &Tensor, target: &Tensor) -> Result<f64> {
    if x.dims() != target.dims() {
        return shape_err(format!("estimate {:?} vs target {:?}", x.dims(), target.dims()));
    }
    Ok(x.sub(target)?.squared_norm() / x.rows() as f64)
}

/// `10 log10(error energy / signal energy)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_from_sums(error_energy: f64, signal_energy: f64) -> Result<f64> {
    if !(signal_energy > 0.0) {
        return Err(Error::ZeroEnergy("NMSE"));
    }
    if error_energy == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (error_energy / signal_energy).log10()).max(NMSE_FLOOR_DB))
}

pub fn nmse(x: &Tensor, target: &Tensor) -> Result<f64> {
    if x.dims() != target.dims() {
        return shape_err(format!("estimate {:?} vs target {:?}", x.dims(), target.dims()));
    }
    nmse_from_sums(x.sub(target)?.squared_norm(), target.squared_norm())
}

/// Loss `(1/normalizer) sum ||x^(K) - x*||^2` over `batch` and its gradient
/// in [`Model::to_flat`] order.
pub fn loss_and_grad(
    model: &Model,
    ops: &Operators,
    batch: &Batch,
    iterations: usize,
    ss: &SupportSelectionSchedule,
    normalizer: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape, true);
    let y = tape.constant(batch.y.clone());
    let target = tape.constant(batch.x.clone());
    let un = unroll(&mut tape, ops, model, &params, y, iterations, ss, ForwardOptions::default())?;
    let x = *un.xs.last().expect("at least one iteration");
    let diff = tape.sub(x, target)?;
    let sq = tape.squared_norm(diff);
    let loss = tape.scale(sq, 1.0 / normalizer);
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item()?, params.flat_grad(&grads, &tape)))
}

/// Batch-mean loss and gradient, with the batch split into fixed-size shards
/// evaluated in parallel and reduced in shard order.
pub fn batch_loss_and_grad(
    model: &Model,
    ops: &Operators,
    batch: &Batch,
    iterations: usize,
    ss: &SupportSelectionSchedule,
    shard_size: usize,
) -> Result<(f64, Vec<f64>)> {
    let b = batch.len();
    if b == 0 {
        return shape_err("empty batch");
    }
    let shard_size = shard_size.max(1);
    let starts: Vec<usize> = (0..b).step_by(shard_size).collect();
    let parts: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|&s| {
            let shard = batch.slice(s, (s + shard_size).min(b));
            loss_and_grad(model, ops, &shard, iterations, ss, b as f64)
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.num_params()];
    for (l, g) in parts {
        loss += l;
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    Ok((loss, grad))
}
