use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::shrink;
use crate::numerics::Tensor;

/// Per-layer percentages of largest-magnitude entries exempt from thresholding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSelectionSchedule {
    pub percentages: Vec<f64>,
}

/// Default per-layer increase of the exemption percentage.
pub const DEFAULT_P_STEP: f64 = 1.2;
/// Default cap on the exemption percentage.
pub const DEFAULT_P_MAX: f64 = 13.0;

impl SupportSelectionSchedule {
    pub fn new(percentages: Vec<f64>) -> Result<Self> {
        if let Some(p) = percentages.iter().find(|p| !(0.0..=100.0).contains(*p)) {
            return Err(Error::Config(format!("support-selection percentage {p} outside [0, 100]")));
        }
        Ok(Self { percentages })
    }

    /// No exemptions at any layer.
    pub fn none(k: usize) -> Self {
        Self {
            percentages: vec![0.0; k],
        }
    }

    /// Linear ramp from 0 at the first layer to `p_max` at the last.
    pub fn linear(k: usize, p_max: f64) -> Result<Self> {
        let percentages = match k {
            0 => vec![],
            1 => vec![p_max],
            _ => (0..k).map(|i| p_max * i as f64 / (k - 1) as f64).collect(),
        };
        Self::new(percentages)
    }

    /// `p^(k) = min(step * k, cap)` for `k = 0..K-1`.
    pub fn ramp(k: usize, step: f64, cap: f64) -> Result<Self> {
        Self::new((0..k).map(|i| (step * i as f64).min(cap)).collect())
    }

    pub fn len(&self) -> usize {
        self.percentages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.percentages.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.percentages[k]
    }
}

/// Number of exempt entries, `ceil(p * n / 100)`.
pub fn exempt_count(p: f64, n: usize) -> usize {
    if p <= 0.0 {
        return 0;
    }
    // Guard against products like 1.2 * 1000 / 100 = 12.000000000000002.
    let c = (p * n as f64 / 100.0 - 1e-9).ceil();
    (c.max(0.0) as usize).min(n)
}

/// Row-major exemption mask: in every row, the `exempt_count(p, cols)`
/// entries of largest magnitude, ties broken by the lowest index.
pub fn exempt_mask(x: &Tensor, p: f64) -> Option<Vec<bool>> {
    let (rows, cols) = x.dims();
    let count = exempt_count(p, cols);
    if count == 0 {
        return None;
    }
    let mut mask = vec![false; rows * cols];
    if count >= cols {
        mask.fill(true);
        return Some(mask);
    }
    let mut idx: Vec<usize> = Vec::with_capacity(cols);
    for i in 0..rows {
        let row = x.row(i);
        idx.clear();
        idx.extend(0..cols);
        idx.select_nth_unstable_by(count - 1, |&a, &b| {
            row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b))
        });
        for &j in &idx[..count] {
            mask[i * cols + j] = true;
        }
    }
    Some(mask)
}

/// Soft thresholding with support selection: exempt entries pass unchanged,
/// the rest become `sign(x) max(0, |x| - theta)`.
pub fn support_select_threshold(x: &Tensor, theta: f64, p: f64) -> Result<Tensor> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("support-selection percentage {p} outside [0, 100]")));
    }
    let mask = exempt_mask(x, p);
    let (r, c) = x.dims();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if mask.as_ref().is_some_and(|m| m[k]) {
                v
            } else {
                shrink(v, theta)
            }
        })
        .collect();
    Tensor::from_raw(vec![r, c], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_percent_is_plain_soft_threshold() {
        let x = Tensor::vector(vec![1.5, -0.2, 0.7, -3.0]).unwrap();
        assert_eq!(
            support_select_threshold(&x, 0.5, 0.0).unwrap().data(),
            x.soft_threshold(0.5).unwrap().data()
        );
    }

    #[test]
    fn hundred_percent_is_identity() {
        let x = Tensor::vector(vec![1.5, -0.2, 0.7, -3.0]).unwrap();
        assert_eq!(support_select_threshold(&x, 0.5, 100.0).unwrap().data(), x.data());
    }

    #[test]
    fn top_one_exempt_example() {
        let x = Tensor::vector(vec![3.0, -2.0, 1.0]).unwrap();
        // 1/3 of N=3 exempts exactly one entry
        let out = support_select_threshold(&x, 1.5, 100.0 / 3.0).unwrap();
        assert_eq!(out.data(), &[3.0, -0.5, 0.0]);
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        let x = Tensor::vector(vec![1.0, -2.0, 2.0, 2.0]).unwrap();
        let mask = exempt_mask(&x, 50.0).unwrap();
        assert_eq!(mask, vec![false, true, true, false]);
    }

    #[test]
    fn exempt_count_rounds_up() {
        assert_eq!(exempt_count(1.2, 1000), 12);
        assert_eq!(exempt_count(1.2, 200), 3);
        assert_eq!(exempt_count(0.0, 200), 0);
        assert_eq!(exempt_count(100.0, 7), 7);
    }

    #[test]
    fn linear_schedule_ramps() {
        let s = SupportSelectionSchedule::linear(5, 2.0).unwrap();
        assert_eq!(s.percentages, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(SupportSelectionSchedule::new(vec![101.0]).is_err());
    }

    #[test]
    fn ramp_schedule_caps() {
        let s = SupportSelectionSchedule::ramp(4, 5.0, 12.0).unwrap();
        assert_eq!(s.percentages, vec![0.0, 5.0, 10.0, 12.0]);
    }
}
