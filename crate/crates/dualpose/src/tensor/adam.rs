//! Adam with bias correction, keyed by parameter name.

use std::collections::BTreeMap;

use super::{check_finite, scl, Scalar, Tensor};
use crate::dim_err;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter moment buffers.
pub struct AdamState<S: Scalar> {
    first_moment: Vec<S>,
    second_moment: Vec<S>,
    step_count: u64,
}

/// The optimizer. One state entry per named parameter, created lazily on
/// the first step so the parameter set is fixed by whoever drives it.
pub struct Adam<S: Scalar> {
    pub hyper: AdamHyper,
    states: BTreeMap<String, AdamState<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(hyper: AdamHyper) -> Self {
        Adam { hyper, states: BTreeMap::new() }
    }

    /// Bias-corrected update of one parameter from its accumulated gradient.
    /// Returns the replacement leaf tensor; a missing gradient is treated
    /// as zero (the parameter and its moments still advance one step).
    pub fn step_param(&mut self, name: &str, param: &Tensor<S>) -> Result<Tensor<S>> {
        let grad = param.grad().unwrap_or_else(|| vec![S::zero(); param.numel()]);
        if grad.len() != param.numel() {
            return Err(dim_err!("adam: gradient length {} vs parameter {}", grad.len(), param.numel()));
        }
        let state = self.states.entry(name.to_string()).or_insert_with(|| AdamState {
            first_moment: vec![S::zero(); param.numel()],
            second_moment: vec![S::zero(); param.numel()],
            step_count: 0,
        });
        if state.first_moment.len() != param.numel() {
            return Err(dim_err!("adam: state for '{name}' does not match parameter shape"));
        }
        state.step_count += 1;
        let t = state.step_count as i32;
        let b1: S = scl(self.hyper.beta1);
        let b2: S = scl(self.hyper.beta2);
        let lr: S = scl(self.hyper.lr);
        let eps: S = scl(self.hyper.epsilon);
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);

        let mut new_data = param.data().to_vec();
        for i in 0..new_data.len() {
            let g = grad[i];
            state.first_moment[i] = b1 * state.first_moment[i] + (S::one() - b1) * g;
            state.second_moment[i] = b2 * state.second_moment[i] + (S::one() - b2) * g * g;
            let m_hat = state.first_moment[i] / bc1;
            let v_hat = state.second_moment[i] / bc2;
            new_data[i] = new_data[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        check_finite(&new_data, "adam update")?;
        Tensor::param(param.shape(), new_data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam: Adam<f64> = Adam::new(AdamHyper::default());
        let p = Tensor::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        // No backward ran, so the gradient is absent (treated as zero).
        let p2 = adam.step_param("w", &p).unwrap();
        assert_eq!(p2.data(), p.data());
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // With constant gradient g, m_hat = g and v_hat = g^2 after the
        // bias correction, so the first update is lr * g/(|g| + eps).
        let hyper = AdamHyper { lr: 0.01, ..Default::default() };
        let mut adam: Adam<f64> = Adam::new(hyper);
        let p = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        p.accumulate_grad(&[3.0, -0.25]);
        let p2 = adam.step_param("w", &p).unwrap();
        for (&v, &g) in p2.data().iter().zip(&[3.0f64, -0.25]) {
            let expected = -0.01 * g.signum();
            assert!((v - expected).abs() < 1e-6, "step {v} vs {expected}");
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut adam: Adam<f64> = Adam::new(AdamHyper::default());
            let mut p = Tensor::param(&[2], vec![0.3, -0.7]).unwrap();
            for step in 0..10 {
                p.accumulate_grad(&[0.1 * (step as f64 + 1.0), -0.2]);
                p = adam.step_param("w", &p).unwrap();
            }
            p.data().to_vec()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_mismatched_state() {
        let mut adam: Adam<f64> = Adam::new(AdamHyper::default());
        let p = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        adam.step_param("w", &p).unwrap();
        let q = Tensor::param(&[3], vec![0.0; 3]).unwrap();
        assert!(adam.step_param("w", &q).is_err());
    }
}
