use std::io::Write;

use crate::error::{shape_err, Result};
use crate::numerics::tensor::{l1, l2};
use crate::numerics::Tensor;

/// One iteration `k`: the quantities computed at `x^(k)` and the iterate
/// `x^(k+1)` it produced. Per-sample vectors have one entry per batch row.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// `x^(k+1)`, `B x N`.
    pub x: Tensor,
    /// `||Phi x^(k) - y||_1`
    pub r: Vec<f64>,
    /// `||W^T (Phi x^(k) - y)||_1`
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Nonzeros of `x^(k+1)`.
    pub support: Vec<usize>,
    /// `||x^(k+1) - x*||_1` when targets are attached.
    pub l1_error: Option<Vec<f64>>,
    pub l2_error: Option<Vec<f64>>,
}

/// Per-iteration record of an unrolled run; `steps.len()` is the iteration count.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct IterationTrace {
    pub steps: Vec<StepRecord>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn batch_size(&self) -> usize {
        self.steps.first().map_or(0, |s| s.x.rows())
    }

    /// `x^(K)`
    pub fn final_iterate(&self) -> Option<&Tensor> {
        self.steps.last().map(|s| &s.x)
    }

    /// `x^(k)` for `k = 0..=K`; `x^(0)` is zero.
    pub fn iterate(&self, k: usize) -> Option<Tensor> {
        match k {
            0 => self.steps.first().map(|s| Tensor::zeros(s.x.rows(), s.x.cols())),
            _ => self.steps.get(k - 1).map(|s| s.x.clone()),
        }
    }

    /// Fill the per-step error fields against row-stacked targets.
    pub fn attach_targets(&mut self, x_star: &Tensor) -> Result<()> {
        for step in &mut self.steps {
            if step.x.dims() != x_star.dims() {
                return shape_err(format!(
                    "targets {:?} do not match iterates {:?}",
                    x_star.dims(),
                    step.x.dims()
                ));
            }
            let (b, _) = x_star.dims();
            let mut e1 = Vec::with_capacity(b);
            let mut e2 = Vec::with_capacity(b);
            for i in 0..b {
                let diff: Vec<f64> = step.x.row(i).iter().zip(x_star.row(i)).map(|(a, c)| a - c).collect();
                e1.push(l1(&diff));
                e2.push(l2(&diff));
            }
            step.l1_error = Some(e1);
            step.l2_error = Some(e2);
        }
        Ok(())
    }

    /// CSV summary, one row per iteration: batch means of r, u, theta, gamma
    /// and support size, NMSE (dB) when targets are given, and the mean
    /// error-bound slack when supplied.
    pub fn write_csv<W: Write>(
        &self,
        out: W,
        x_star: Option<&Tensor>,
        slack: Option<&[Vec<f64>]>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "nmse_db", "r", "u", "theta", "gamma", "support_size", "bound_slack"])
            .map_err(csv_err)?;
        for (k, step) in self.steps.iter().enumerate() {
            let nmse = match x_star {
                Some(t) => fmt(crate::training::nmse(&step.x, t)?),
                None => String::new(),
            };
            let slack = slack.and_then(|s| s.get(k)).map(|v| fmt(mean(v))).unwrap_or_default();
            let support: Vec<f64> = step.support.iter().map(|&v| v as f64).collect();
            w.write_record([
                k.to_string(),
                nmse,
                fmt(mean(&step.r)),
                fmt(mean(&step.u)),
                fmt(mean(&step.theta)),
                fmt(mean(&step.gamma)),
                fmt(mean(&support)),
                slack,
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}
