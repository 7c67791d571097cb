//! Correlation studies between the true ℓ1 error and its observable
//! proxies, plus per-iteration summaries of predicted parameters.

use crate::error::{shape_err, Error, Result};
use crate::numerics::tensor::l1;
use crate::numerics::Tensor;
use crate::problems::gen_sparse_batch;

use super::eval::{mean_std, pearson, EvalReport};

/// Paired samples of `||x*||_1`, `r = ||Phi x*||_1` and `u = ||W^T Phi x*||_1`
/// for one sparsity level.
#[derive(Clone, Debug, PartialEq)]
pub struct NormCorrelation {
    pub sparsity: f64,
    pub l1_target: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub corr_r: f64,
    pub corr_u: f64,
}

/// Draw `samples` targets at expected sparsity `s` and correlate their ℓ1
/// norm with the proxies at `x = 0`. All-zero targets are dropped.
pub fn norm_correlation(phi: &Tensor, w: &Tensor, s: f64, samples: usize, seed: u64) -> Result<NormCorrelation> {
    if phi.dims() != w.dims() {
        return shape_err("Phi and W differ in shape");
    }
    let x = gen_sparse_batch(phi.cols(), s, samples, seed)?;
    let y = x.matmul_nt(phi)?;
    let wy = y.matmul(w)?;
    let mut out = NormCorrelation {
        sparsity: s,
        l1_target: Vec::with_capacity(samples),
        r: Vec::with_capacity(samples),
        u: Vec::with_capacity(samples),
        corr_r: f64::NAN,
        corr_u: f64::NAN,
    };
    for i in 0..samples {
        let n1 = l1(x.row(i));
        if n1 == 0.0 {
            continue;
        }
        out.l1_target.push(n1);
        out.r.push(l1(y.row(i)));
        out.u.push(l1(wy.row(i)));
    }
    if out.l1_target.len() < 2 {
        return Err(Error::Config("too few nonzero samples to correlate".into()));
    }
    out.corr_r = pearson(&out.l1_target, &out.r);
    out.corr_u = pearson(&out.l1_target, &out.u);
    Ok(out)
}

/// `u^(i)` against `||x^(j) - x*||_1` over an evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyCorrelation {
    pub i: usize,
    pub j: usize,
    pub u: Vec<f64>,
    pub error_l1: Vec<f64>,
    pub corr: f64,
}

pub fn proxy_error_correlation(report: &EvalReport, i: usize, j: usize) -> Result<ProxyCorrelation> {
    let k = report.steps.len();
    if i >= k || j > k {
        return Err(Error::Config(format!("pair ({i}, {j}) is out of range for {k} iterations")));
    }
    let u = report.steps[i].u.clone();
    let error_l1 = report.error_l1[j].clone();
    let corr = pearson(&u, &error_l1);
    Ok(ProxyCorrelation { i, j, u, error_l1, corr })
}

/// Mean and standard deviation of `theta` and `gamma` at each iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStats {
    pub theta_mean: Vec<f64>,
    pub theta_std: Vec<f64>,
    pub gamma_mean: Vec<f64>,
    pub gamma_std: Vec<f64>,
}

pub fn parameter_stats(report: &EvalReport) -> ParameterStats {
    let mut s = ParameterStats {
        theta_mean: Vec::new(),
        theta_std: Vec::new(),
        gamma_mean: Vec::new(),
        gamma_std: Vec::new(),
    };
    for step in &report.steps {
        let (tm, ts) = mean_std(&step.theta);
        let (gm, gs) = mean_std(&step.gamma);
        s.theta_mean.push(tm);
        s.theta_std.push(ts);
        s.gamma_mean.push(gm);
        s.gamma_std.push(gs);
    }
    s
}

/// Mean and standard deviation of `theta/gamma` and of `mu ||x^(k) - x*||_1`
/// at each iteration; samples with `gamma = 0` are left out of the ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioStats {
    pub ratio_mean: Vec<f64>,
    pub ratio_std: Vec<f64>,
    pub error_mean: Vec<f64>,
    pub error_std: Vec<f64>,
}

pub fn ratio_stats(report: &EvalReport, mu: f64) -> RatioStats {
    let mut s = RatioStats {
        ratio_mean: Vec::new(),
        ratio_std: Vec::new(),
        error_mean: Vec::new(),
        error_std: Vec::new(),
    };
    for (k, step) in report.steps.iter().enumerate() {
        let ratios: Vec<f64> = step
            .theta
            .iter()
            .zip(&step.gamma)
            .filter(|(_, g)| **g != 0.0)
            .map(|(t, g)| t / g)
            .collect();
        let errs: Vec<f64> = report.error_l1[k].iter().map(|e| mu * e).collect();
        let (rm, rs) = mean_std(&ratios);
        let (em, es) = mean_std(&errs);
        s.ratio_mean.push(rm);
        s.ratio_std.push(rs);
        s.error_mean.push(em);
        s.error_std.push(es);
    }
    s
}
