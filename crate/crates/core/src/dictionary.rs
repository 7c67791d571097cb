//! Analytic weight matrix `W` with low generalized coherence to `Phi`.
//!
//! `W` minimizes the Frobenius surrogate `||W^T Phi||_F^2` subject to the
//! unit-diagonal constraint `w_i^T phi_i = 1`, by projected gradient descent
//! starting from `W = Phi`. A second phase then lowers the largest
//! off-diagonal entries directly through `sum |c_ij|^p` for growing `p`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{tensor_checksum, Container};
use crate::error::{shape_err, Error, Result};
use crate::numerics::tensor::{axpy, dot};
use crate::numerics::{largest_eigenvalue, Tensor, POWER_MAX_ITER, POWER_TOL};
use crate::problems::check_unit_columns;

pub const DEFAULT_ITERS: usize = 10_000;
/// Early stop once the relative surrogate decrease falls below this.
pub const DEFAULT_REL_TOL: f64 = 1e-12;
/// Steps of the max-coherence refinement, split evenly over `REFINE_POWERS`.
pub const DEFAULT_REFINE_ITERS: usize = 20;
/// Consecutive surrogate increases tolerated before reporting divergence.
const DIVERGENCE_PATIENCE: usize = 10;
const REFINE_POWERS: [i32; 4] = [4, 8, 16, 32];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryOptions {
    /// Gradient step; `None` means `1 / (2 * lambda_max(Phi Phi^T))`.
    pub step: Option<f64>,
    pub iters: usize,
    pub rel_tol: f64,
    /// `0` skips the refinement phase.
    pub refine_iters: usize,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        Self {
            step: None,
            iters: DEFAULT_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            refine_iters: DEFAULT_REFINE_ITERS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticDictionary {
    /// `M x N`
    pub w: Tensor,
    /// Achieved `max_{i != j} |w_i^T phi_j|`.
    pub coherence: f64,
    /// Frobenius-phase iterations.
    pub iterations_run: usize,
    /// Accepted refinement steps.
    pub refine_steps: usize,
    /// Iterate returned as `w`: the one with the lowest coherence seen.
    /// 0 is the projected start `W = Phi`, `1..=iterations_run` the
    /// Frobenius phase and later indices the refinement steps.
    pub selected_iteration: usize,
    /// `||W^T Phi||_F^2` of the returned iterate.
    pub surrogate_value: f64,
    /// Surrogate after every accepted iteration, starting with `W = Phi`.
    pub surrogate_history: Vec<f64>,
}

/// Projected gradient descent on the Frobenius surrogate followed by the
/// max-coherence refinement. The iterate with the lowest generalized
/// coherence along the whole path is returned.
pub fn compute_dictionary(phi: &Tensor, opts: &DictionaryOptions) -> Result<AnalyticDictionary> {
    check_unit_columns(phi)?;
    let (m, n) = phi.dims();
    let gram = phi.matmul_nt(phi)?;
    let step = match opts.step {
        Some(s) => s,
        None => 0.5 / largest_eigenvalue(&gram, POWER_TOL, POWER_MAX_ITER)?,
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("dictionary step must be positive, got {step}")));
    }

    let mut w = phi.as_matrix();
    let mut gw = gram_times(&gram, &w, m, n);
    let mut f = surrogate(&w, &gw);
    let mut history = vec![f];
    let mut best = (generalized_coherence(&w, phi)?, 0, w.clone(), f);
    let mut increases = 0;
    let mut iterations = 0;

    for it in 1..=opts.iters {
        // grad = 2 G W
        for (wi, gi) in w.data_mut().iter_mut().zip(gw.data()) {
            *wi -= 2.0 * step * gi;
        }
        project_diagonal(&mut w, phi);
        gw = gram_times(&gram, &w, m, n);
        let f_new = surrogate(&w, &gw);
        iterations = it;
        history.push(f_new);

        if !f_new.is_finite() || f_new > f {
            increases += 1;
            if increases >= DIVERGENCE_PATIENCE || !f_new.is_finite() {
                let tail = history[history.len().saturating_sub(DIVERGENCE_PATIENCE + 1)..].to_vec();
                return Err(Error::Divergence {
                    iteration: it,
                    trace: tail,
                });
            }
        } else {
            increases = 0;
        }
        let mu = generalized_coherence(&w, phi)?;
        if mu < best.0 {
            best = (mu, it, w.clone(), f_new);
        }
        let decrease = f - f_new;
        f = f_new;
        if decrease >= 0.0 && decrease <= opts.rel_tol * f.abs() {
            break;
        }
    }

    let refine_steps = refine(&mut w, phi, opts.refine_iters, |w, step| {
        let mu = generalized_coherence(w, phi)?;
        if mu < best.0 {
            let f = surrogate(w, &gram_times(&gram, w, m, n));
            best = (mu, iterations + step, w.clone(), f);
        }
        Ok(())
    })?;

    let (coherence, selected_iteration, w, surrogate_value) = best;
    Ok(AnalyticDictionary {
        coherence,
        w,
        iterations_run: iterations,
        refine_steps,
        selected_iteration,
        surrogate_value,
        surrogate_history: history,
    })
}

/// Backtracking projected descent on `sum_{i != j} (|c_ij| / mu_0)^p`,
/// `C = W^T Phi`, for each `p` in turn. `visit` sees every accepted iterate
/// with its running step count.
fn refine(
    w: &mut Tensor,
    phi: &Tensor,
    iters: usize,
    mut visit: impl FnMut(&Tensor, usize) -> Result<()>,
) -> Result<usize> {
    let per_power = iters / REFINE_POWERS.len();
    if per_power == 0 {
        return Ok(0);
    }
    let mu0 = generalized_coherence(w, phi)?;
    if !(mu0 > 0.0) {
        return Ok(0);
    }
    let objective = |w: &Tensor, p: i32| -> Result<(f64, Tensor)> {
        let mut c = w.matmul_tn(phi)?;
        let n = c.rows();
        let mut f = 0.0;
        for i in 0..n {
            for (j, v) in c.row_mut(i).iter_mut().enumerate() {
                if i == j {
                    *v = 0.0;
                } else {
                    let a = *v / mu0;
                    f += a.abs().powi(p);
                    *v = a.powi(p - 1).abs() * a.signum();
                }
            }
        }
        Ok((f, c))
    };
    let mut accepted = 0;
    let mut step = 1e-2 * w.squared_norm().sqrt();
    for p in REFINE_POWERS {
        let (mut f, mut d) = objective(w, p)?;
        for _ in 0..per_power {
            // d/dw_i = sum_j d_ij phi_j, up to the factor p / mu0
            let grad = phi.matmul_nt(&d)?;
            let norm = grad.squared_norm().sqrt();
            if !(norm > 0.0) {
                break;
            }
            let mut moved = false;
            for _ in 0..40 {
                let mut trial = w.clone();
                axpy(-step / norm, grad.data(), trial.data_mut());
                project_diagonal(&mut trial, phi);
                let (f_new, d_new) = objective(&trial, p)?;
                if f_new < f {
                    *w = trial;
                    f = f_new;
                    d = d_new;
                    step *= 1.5;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
            accepted += 1;
            visit(w, accepted)?;
        }
    }
    Ok(accepted)
}

fn gram_times(gram: &Tensor, w: &Tensor, m: usize, n: usize) -> Tensor {
    let mut out = vec![0.0; m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (p, &g) in gram.row(i).iter().enumerate() {
            axpy(g, w.row(p), row);
        }
    });
    Tensor::from_raw(vec![m, n], out).expect("shape matches")
}

/// `||W^T Phi||_F^2 = tr(W^T G W)` with `gw = G W`.
fn surrogate(w: &Tensor, gw: &Tensor) -> f64 {
    dot(w.data(), gw.data())
}

/// Euclidean projection of every column onto `{w : w^T phi_i = 1}`.
/// Exact because the columns of `phi` have unit norm.
pub fn project_diagonal(w: &mut Tensor, phi: &Tensor) {
    let (m, n) = phi.dims();
    let mut d = vec![0.0; n];
    for r in 0..m {
        for ((dj, wj), pj) in d.iter_mut().zip(w.row(r)).zip(phi.row(r)) {
            *dj += wj * pj;
        }
    }
    for r in 0..m {
        for ((wj, pj), dj) in w.row_mut(r).iter_mut().zip(phi.row(r)).zip(&d) {
            *wj += (1.0 - dj) * pj;
        }
    }
}

/// `max_{i != j} |w_i^T phi_j|` over columns.
pub fn generalized_coherence(w: &Tensor, phi: &Tensor) -> Result<f64> {
    if w.dims() != phi.dims() {
        return shape_err(format!("W is {:?} but Phi is {:?}", w.dims(), phi.dims()));
    }
    let cross = w.matmul_tn(phi)?;
    let n = cross.rows();
    let mut best = 0.0f64;
    for i in 0..n {
        for (j, v) in cross.row(i).iter().enumerate() {
            if i != j {
                best = best.max(v.abs());
            }
        }
    }
    Ok(best)
}

/// Lower bound `sqrt((N - M) / (M (N - 1)))` on the coherence of any
/// `M x N` unit-norm frame.
pub fn welch_bound(m: usize, n: usize) -> Result<f64> {
    if m == 0 || m > n {
        return Err(Error::Config(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    if m == n {
        return Ok(0.0);
    }
    Ok((((n - m) as f64) / ((m * (n - 1)) as f64)).sqrt())
}

/// Largest integer `s` with `s < (1 + 1/mu) / 2`.
pub fn max_admissible_sparsity(mu: f64) -> Result<usize> {
    if !(mu > 0.0) {
        return Err(Error::Config(format!("coherence must be positive, got {mu}")));
    }
    let bound = (1.0 + 1.0 / mu) / 2.0;
    Ok((bound.ceil() - 1.0).max(0.0) as usize)
}

/// Upper end of the admissible step-size interval `(0, 2 / (2 mu s - mu + 1))`.
pub fn max_step_size(mu: f64, s: usize) -> f64 {
    2.0 / (2.0 * mu * s as f64 - mu + 1.0)
}

#[derive(Serialize, Deserialize)]
struct DictionaryMeta {
    phi_checksum: String,
    coherence: f64,
    iterations_run: usize,
    refine_steps: usize,
    selected_iteration: usize,
    surrogate_value: f64,
}

impl AnalyticDictionary {
    /// Persist with the checksum of the `phi` it was computed for.
    pub fn save(&self, path: impl AsRef<Path>, phi: &Tensor) -> Result<()> {
        let meta = DictionaryMeta {
            phi_checksum: tensor_checksum(phi),
            coherence: self.coherence,
            iterations_run: self.iterations_run,
            refine_steps: self.refine_steps,
            selected_iteration: self.selected_iteration,
            surrogate_value: self.surrogate_value,
        };
        Container::new("dictionary", serde_json::to_value(meta)?)
            .with_tensor("w", self.w.clone())
            .save(path)
    }

    /// Load and verify it belongs to `phi`.
    pub fn load(path: impl AsRef<Path>, phi: &Tensor) -> Result<Self> {
        let c = Container::load_kind(path, "dictionary")?;
        let meta: DictionaryMeta = serde_json::from_value(c.meta.clone())?;
        let found = tensor_checksum(phi);
        if meta.phi_checksum != found {
            return Err(Error::Checksum {
                expected: meta.phi_checksum,
                found,
            });
        }
        let w = c.tensor("w")?.clone();
        if w.dims() != phi.dims() {
            return Err(Error::Container("dictionary shape does not match Phi".into()));
        }
        Ok(Self {
            w,
            coherence: meta.coherence,
            iterations_run: meta.iterations_run,
            refine_steps: meta.refine_steps,
            selected_iteration: meta.selected_iteration,
            surrogate_value: meta.surrogate_value,
            surrogate_history: Vec::new(),
        })
    }
}
