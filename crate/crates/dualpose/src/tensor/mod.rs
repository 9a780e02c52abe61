//! Minimal dense-tensor engine: row-major buffers, reverse-mode autodiff,
//! an Adam optimizer and a finite-difference gradient oracle.
//!
//! Tensors are immutable value handles (`Arc` inside); ops build a graph of
//! nodes that `backward` walks in reverse topological order. Precision is a
//! construction-time choice via the [`Scalar`] parameter: `f32` for training,
//! `f64` for gradient checks.

pub mod adam;
mod autodiff;
pub mod gradcheck;
mod ops;
pub mod scalar;
#[cfg(test)]
mod tests;

pub use autodiff::Node;
pub use scalar::{scl, Scalar};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::Result;
use crate::{dim_err, numeric_err, usage_err};

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

struct Inner<S: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<S>>>,
    node: Node<S>,
}

/// Dense n-dimensional array with optional gradient tracking.
///
/// Cloning is cheap (shared buffer). Tracked tensors are never mutated in
/// place; every op allocates a fresh result.
pub struct Tensor<S: Scalar> {
    inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

pub(crate) fn check_finite<S: Scalar>(data: &[S], what: &str) -> Result<()> {
    for v in data {
        if !v.is_finite() {
            return Err(numeric_err!("non-finite value in {what}"));
        }
    }
    Ok(())
}

impl<S: Scalar> Tensor<S> {
    fn new_unchecked(shape: Vec<usize>, data: Vec<S>, requires_grad: bool, node: Node<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                node,
            }),
        }
    }

    /// Result of an op. Validates finiteness; drops the node when no parent
    /// tracks gradients so constant subgraphs carry no history.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<S>, node: Node<S>) -> Result<Self> {
        check_finite(&data, node.name())?;
        let requires = node.parents().iter().any(|p| p.requires_grad());
        let node = if requires { node } else { Node::Leaf };
        Ok(Self::new_unchecked(shape, data, requires, node))
    }

    /// Constant leaf tensor from a flat row-major buffer.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(dim_err!("zero extent in shape {:?}", shape));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(dim_err!(
                "shape {:?} wants {} elements, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            ));
        }
        check_finite(&data, "tensor literal")?;
        Ok(Self::new_unchecked(shape.to_vec(), data, false, Node::Leaf))
    }

    /// Constant leaf from f64 values (converted into the engine precision).
    pub fn from_f64s(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| scl(v)).collect())
    }

    /// Trainable leaf tensor (gradients accumulate here).
    pub fn param(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.into_param())
    }

    /// Re-wrap this tensor's values as a fresh trainable leaf.
    pub fn into_param(self) -> Self {
        Self::new_unchecked(self.inner.shape.clone(), self.inner.data.clone(), true, Node::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new_unchecked(shape.to_vec(), vec![S::zero(); shape.iter().product()], false, Node::Leaf)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::new_unchecked(shape.to_vec(), vec![scl(v); shape.iter().product()], false, Node::Leaf)
    }

    pub fn scalar(v: f64) -> Self {
        Self::full(&[1], v)
    }

    pub(crate) fn id(&self) -> usize {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn node(&self) -> &Node<S> {
        &self.inner.node
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[S]) {
        let mut slot = self.inner.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi = *gi + *ci;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    /// A constant leaf with the same values, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::new_unchecked(self.inner.shape.clone(), self.inner.data.clone(), false, Node::Leaf)
    }

    pub fn scalar_value(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(usage_err!("expected scalar tensor, got shape {:?}", self.shape()));
        }
        Ok(self.inner.data[0])
    }

    pub fn scalar_f64(&self) -> Result<f64> {
        Ok(self.scalar_value()?.to_f64_lossy())
    }

    /// Reverse-mode pass from a scalar loss. Populates `grad` on every
    /// reachable tensor that requires gradients; repeated calls accumulate.
    pub fn backward(&self) -> Result<()> {
        autodiff::backward(self)
    }
}
