use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;
use crate::problems::Batch;
use crate::solvers::{ForwardOptions, IterationTrace, Operators, Solver, SupportSelectionSchedule};

use super::loss::nmse_from_sums;

/// Rows per evaluation chunk.
pub const EVAL_CHUNK: usize = 256;

/// Per-sample quantities of iteration `k` over a whole evaluation set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// NMSE of the final iterate.
    pub nmse_db: f64,
    /// NMSE of `x^(k+1)` for each `k`.
    pub per_iteration_nmse_db: Vec<f64>,
    pub steps: Vec<StepStats>,
    /// `||x^(k) - x*||_1` per sample for `k = 0..=K`.
    pub error_l1: Vec<Vec<f64>>,
}

struct ChunkResult {
    error_energy: Vec<f64>,
    signal_energy: f64,
    steps: Vec<StepStats>,
    error_l1: Vec<Vec<f64>>,
}

fn summarize(trace: IterationTrace, x_star: &Tensor) -> Result<ChunkResult> {
    let b = x_star.rows();
    let row_l1 = |x: &Tensor| -> Vec<f64> {
        (0..b)
            .map(|i| x.row(i).iter().zip(x_star.row(i)).map(|(a, c)| (a - c).abs()).sum())
            .collect()
    };
    let mut error_l1 = vec![(0..b).map(|i| x_star.row(i).iter().map(|v| v.abs()).sum()).collect()];
    let mut error_energy = Vec::with_capacity(trace.iterations());
    let mut steps = Vec::with_capacity(trace.iterations());
    for s in trace.steps {
        if s.x.dims() != x_star.dims() {
            return shape_err("trace does not match targets");
        }
        error_energy.push(s.x.sub(x_star)?.squared_norm());
        error_l1.push(row_l1(&s.x));
        steps.push(StepStats {
            theta: s.theta,
            gamma: s.gamma,
            r: s.r,
            u: s.u,
            support: s.support,
        });
    }
    Ok(ChunkResult {
        error_energy,
        signal_energy: x_star.squared_norm(),
        steps,
        error_l1,
    })
}

/// Run `solver` over `test` in parallel chunks and gather per-iteration
/// statistics in sample order.
pub fn evaluate(
    solver: &Solver,
    ops: &Operators,
    test: &Batch,
    iterations: usize,
    ss: &SupportSelectionSchedule,
    opts: ForwardOptions,
) -> Result<EvalReport> {
    let b = test.len();
    if b == 0 {
        return shape_err("empty evaluation set");
    }
    let starts: Vec<usize> = (0..b).step_by(EVAL_CHUNK).collect();
    let chunks: Vec<ChunkResult> = starts
        .par_iter()
        .map(|&s| {
            let part = test.slice(s, (s + EVAL_CHUNK).min(b));
            let trace = solver.run(ops, &part.y, iterations, ss, opts)?;
            summarize(trace, &part.x)
        })
        .collect::<Result<_>>()?;

    let mut error_energy = vec![0.0; iterations];
    let mut signal = 0.0;
    let mut steps = vec![StepStats::default(); iterations];
    let mut error_l1 = vec![Vec::with_capacity(b); iterations + 1];
    for c in chunks {
        signal += c.signal_energy;
        for (acc, e) in error_energy.iter_mut().zip(&c.error_energy) {
            *acc += e;
        }
        for (acc, s) in steps.iter_mut().zip(c.steps) {
            acc.theta.extend(s.theta);
            acc.gamma.extend(s.gamma);
            acc.r.extend(s.r);
            acc.u.extend(s.u);
            acc.support.extend(s.support);
        }
        for (acc, e) in error_l1.iter_mut().zip(c.error_l1) {
            acc.extend(e);
        }
    }
    let per_iteration_nmse_db = error_energy
        .iter()
        .map(|&e| nmse_from_sums(e, signal))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        nmse_db: *per_iteration_nmse_db.last().expect("at least one iteration"),
        per_iteration_nmse_db,
        steps,
        error_l1,
    })
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation; NaN when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa == 0.0 || sb == 0.0 {
        return f64::NAN;
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    cov / (sa * sb)
}

/// Ranks with ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-15);
        assert!(pearson(&a, &[1.0; 4]).is_nan());
        assert!((spearman(&a, &[1.0, 10.0, 100.0, 1000.0]) - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn mean_std_example() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
