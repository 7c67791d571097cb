//! Single-layer LSTM cell that maps the error proxies `[r, u]` to a step
//! size and threshold for each sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::stream_rng;

/// Which error proxies feed the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFeatures {
    /// `r = ||Phi x - y||_1` only
    R,
    /// `u = ||W^T (Phi x - y)||_1` only
    U,
    /// both, as `[r, u]`
    Both,
}

impl InputFeatures {
    pub fn width(self) -> usize {
        match self {
            Self::R | Self::U => 1,
            Self::Both => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::R => "r",
            Self::U => "u",
            Self::Both => "both",
        }
    }
}

/// Learnable parameters of the cell. Gate blocks are laid out along the
/// `4H` axis in the order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentCellParams {
    pub features: InputFeatures,
    pub hidden: usize,
    /// `F x 4H`, `F = features.width()`
    pub w_input: Tensor,
    /// `H x 4H`
    pub w_hidden: Tensor,
    /// `1 x 4H`
    pub bias: Tensor,
    /// `1 x H`
    pub c0: Tensor,
    /// `1 x H`
    pub h0: Tensor,
    /// `H x 2`: the transpose of the cell-state-to-output matrix `U`, so
    /// that `[theta, gamma] = softsign(c * output)` row by row.
    pub output: Tensor,
    /// `1 x F` fixed multipliers applied to the input features; not trained.
    pub input_scale: Tensor,
}

/// Variables of one cell instance registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CellVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    pub c0: Var,
    pub h0: Var,
    pub output: Var,
}

impl RecurrentCellParams {
    /// Weights and non-forget biases uniform in `+-1/sqrt(H)`, forget bias 1,
    /// zero initial states.
    pub fn init(features: InputFeatures, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = stream_rng(seed, 0);
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let f = features.width();
        let h4 = 4 * hidden;
        let w_input = Tensor::matrix(f, h4, uniform(f * h4))?;
        let w_hidden = Tensor::matrix(hidden, h4, uniform(hidden * h4))?;
        let mut bias = Tensor::matrix(1, h4, uniform(h4))?;
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let output = Tensor::matrix(hidden, 2, uniform(2 * hidden))?;
        Ok(Self {
            features,
            hidden,
            w_input,
            w_hidden,
            bias,
            c0: Tensor::zeros(1, hidden),
            h0: Tensor::zeros(1, hidden),
            output,
            input_scale: Tensor::filled(1, f, 1.0),
        })
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 6] {
        [&self.w_input, &self.w_hidden, &self.bias, &self.c0, &self.h0, &self.output]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.bias,
            &mut self.c0,
            &mut self.h0,
            &mut self.output,
        ]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let h = self.hidden;
        let expect = [
            (self.features.width(), 4 * h),
            (h, 4 * h),
            (1, 4 * h),
            (1, h),
            (1, h),
            (h, 2),
        ];
        if self.input_scale.dims() != (1, self.features.width()) {
            return Err(Error::Shape("input scale must have one entry per feature".into()));
        }
        for (t, e) in self.tensors().iter().zip(expect) {
            if t.dims() != e {
                return Err(Error::Shape(format!("cell parameter is {:?}, expected {:?}", t.dims(), e)));
            }
        }
        Ok(())
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> CellVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        CellVars {
            w_input: put(&self.w_input),
            w_hidden: put(&self.w_hidden),
            bias: put(&self.bias),
            c0: put(&self.c0),
            h0: put(&self.h0),
            output: put(&self.output),
        }
    }
}

impl CellVars {
    pub(crate) fn all(&self) -> [Var; 6] {
        [self.w_input, self.w_hidden, self.bias, self.c0, self.h0, self.output]
    }

    /// One cell update: returns the new `(c, h)`.
    pub fn step(&self, tape: &mut Tape, hidden: usize, input: Var, c: Var, h: Var) -> Result<(Var, Var)> {
        let xi = tape.matmul(input, self.w_input)?;
        let hh = tape.matmul(h, self.w_hidden)?;
        let pre = tape.add(xi, hh)?;
        let pre = tape.add(pre, self.bias)?;
        let gate = |tape: &mut Tape, block: usize| tape.slice_cols(pre, block * hidden, hidden);
        let i = gate(tape, 0)?;
        let f = gate(tape, 1)?;
        let g = gate(tape, 2)?;
        let o = gate(tape, 3)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((c_next, h_next))
    }

    /// `(theta, gamma)` columns from the cell state.
    pub fn readout(&self, tape: &mut Tape, c: Var) -> Result<(Var, Var)> {
        let out = tape.matmul(c, self.output)?;
        let out = tape.softsign(out);
        Ok((tape.slice_cols(out, 0, 1)?, tape.slice_cols(out, 1, 1)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::sigmoid;

    #[test]
    fn init_shapes_and_forget_bias() {
        let p = RecurrentCellParams::init(InputFeatures::Both, 3, 7).unwrap();
        p.validate().unwrap();
        assert_eq!(&p.bias.data()[3..6], &[1.0, 1.0, 1.0]);
        let bound = 1.0 / 3f64.sqrt();
        assert!(p.w_hidden.data().iter().all(|v| v.abs() <= bound));
        assert!(RecurrentCellParams::init(InputFeatures::R, 0, 0).is_err());
    }

    #[test]
    fn single_unit_step_matches_hand_computation() {
        let mut p = RecurrentCellParams::init(InputFeatures::R, 1, 0).unwrap();
        p.w_input = Tensor::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        p.w_hidden = Tensor::from_rows(&[vec![-0.1, 0.5, 0.2, -0.3]]).unwrap();
        p.bias = Tensor::from_rows(&[vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
        p.c0 = Tensor::from_rows(&[vec![0.5]]).unwrap();
        p.h0 = Tensor::from_rows(&[vec![-0.2]]).unwrap();

        let mut tape = Tape::new();
        let v = p.register(&mut tape, false);
        let input = tape.constant(Tensor::from_rows(&[vec![2.0]]).unwrap());
        let (c, h) = v.step(&mut tape, 1, input, v.c0, v.h0).unwrap();

        let pre = |wi: f64, wh: f64, b: f64| 2.0 * wi + (-0.2) * wh + b;
        let i = sigmoid(pre(0.1, -0.1, 0.0));
        let f = sigmoid(pre(0.2, 0.5, 1.0));
        let g = pre(0.3, 0.2, 0.0).tanh();
        let o = sigmoid(pre(0.4, -0.3, 0.0));
        let c_ref = f * 0.5 + i * g;
        let h_ref = o * c_ref.tanh();
        assert!((tape.value(c).data()[0] - c_ref).abs() < 1e-15);
        assert!((tape.value(h).data()[0] - h_ref).abs() < 1e-15);
    }
}
