//! Finite-difference gradient oracle, independent of the reverse-mode path.

use super::{Scalar, Tensor};
use crate::error::Result;
use crate::numeric_err;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-3;

/// Elements whose finite-difference value is below this are compared
/// absolutely instead of relatively.
pub const ABS_FLOOR: f64 = 1e-8;

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for a
/// pure scalar function of one tensor.
pub fn finite_diff_gradient<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<Tensor<S>>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    let mut grad = vec![S::zero(); x.numel()];
    let eps_s: S = super::scl(eps);
    for i in 0..x.numel() {
        let mut plus = x.data().to_vec();
        plus[i] = plus[i] + eps_s;
        let mut minus = x.data().to_vec();
        minus[i] = minus[i] - eps_s;
        let fp = f(&Tensor::from_vec(x.shape(), plus)?)?.scalar_value()?;
        let fm = f(&Tensor::from_vec(x.shape(), minus)?)?.scalar_value()?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(numeric_err!("finite_diff_gradient: non-finite function value"));
        }
        grad[i] = (fp - fm) / (super::scl::<S>(2.0) * eps_s);
    }
    Tensor::from_vec(x.shape(), grad)
}

/// One line of a gradient-check report.
#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: String,
    pub max_err: f64,
    pub pass: bool,
}

/// Compare reverse-mode gradients against central differences for a scalar
/// function of several named tensors.
///
/// `f` is called with replacements for every tensor in `named` (same order)
/// and must return a scalar. The reverse-mode side runs once with tracked
/// leaves; the numeric side re-evaluates `f` per perturbed element.
pub fn check_function_gradients<S, F>(
    named: &[(String, Tensor<S>)],
    f: F,
    eps: f64,
    tol: f64,
) -> Result<Vec<GradCheckRow>>
where
    S: Scalar,
    F: Fn(&[Tensor<S>]) -> Result<Tensor<S>>,
{
    let leaves: Vec<Tensor<S>> = named.iter().map(|(_, t)| t.detach().into_param()).collect();
    let loss = f(&leaves)?;
    loss.backward()?;

    let mut rows = Vec::with_capacity(named.len());
    for (i, (name, _)) in named.iter().enumerate() {
        let analytic: Vec<f64> = leaves[i]
            .grad()
            .unwrap_or_else(|| vec![S::zero(); leaves[i].numel()])
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect();
        let probe = leaves[i].detach();
        let numeric = finite_diff_gradient(
            |x| {
                let mut replaced: Vec<Tensor<S>> = leaves.iter().map(|t| t.detach()).collect();
                replaced[i] = x.clone();
                f(&replaced)
            },
            &probe,
            eps,
        )?;
        let numeric: Vec<f64> = numeric.data().iter().map(|v| v.to_f64_lossy()).collect();
        let max_err = max_grad_error(&analytic, &numeric);
        rows.push(GradCheckRow { name: name.clone(), max_err, pass: max_err < tol });
    }
    Ok(rows)
}

/// Per-element error: relative against the finite-difference value, or
/// absolute where that value is tiny.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if numeric.abs() < ABS_FLOOR {
        diff
    } else {
        diff / numeric.abs()
    }
}

/// Worst per-element error between two gradient buffers.
pub fn max_grad_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| grad_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::<f64>::from_vec(&[1], vec![3.0]).unwrap();
        let g = finite_diff_gradient(|t| t.square()?.sum_all(), &x, DEFAULT_EPS).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sine_at_zero() {
        // sin is not an engine op; the oracle only needs a pure scalar fn.
        let x = Tensor::<f64>::from_vec(&[1], vec![0.0]).unwrap();
        let g = finite_diff_gradient(
            |t| Tensor::from_vec(&[1], vec![t.data()[0].sin()]),
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_function_is_an_error() {
        let x = Tensor::<f64>::from_vec(&[1], vec![0.0]).unwrap();
        let r = finite_diff_gradient(
            |t| Tensor::from_vec(&[1], vec![t.data()[0].ln()]),
            &x,
            DEFAULT_EPS,
        );
        assert!(r.is_err());
    }
}
