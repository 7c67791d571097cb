use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return shape_err("Adam parameter, gradient and moment lengths differ");
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default(), 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        s.m = vec![0.5];
        s.v = vec![0.25];
        adam_step(&mut p, &[0.0], &mut s, &AdamConfig::default(), 0.1).unwrap();
        assert_eq!(s.m, vec![0.45]);
        assert!((s.v[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[3.0, -0.5, 1e-3], &mut s, &AdamConfig::default(), 0.01).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        for (pi, g) in p.iter().zip([3.0f64, -0.5, 1e-3]) {
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15);
            assert!((pi + 0.01 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0], &[1.0], &mut s, &AdamConfig::default(), 0.1).is_err());
    }
}
