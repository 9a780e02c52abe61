//! Learnable layer parameters shared by the relation core and the pipeline.
//!
//! Initialization is centered uniform scaled by 1/sqrt(fan-in) with zero
//! biases, drawn from the seeded RNG the caller provides.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

fn init_uniform<S: Scalar>(rng: &mut impl Rng, count: usize, fan_in: usize) -> Vec<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..count).map(|_| crate::tensor::scl(rng.gen_range(-bound..bound))).collect()
}

/// 2-D convolution parameters plus its fixed padding and stride.
pub struct Conv2d<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub pad: (usize, usize),
    pub stride: (usize, usize),
}

impl<S: Scalar> Conv2d<S> {
    pub fn init(
        c_out: usize,
        c_in: usize,
        kernel: (usize, usize),
        pad: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let (kh, kw) = kernel;
        let fan_in = c_in * kh * kw;
        let weight = Tensor::param(&[c_out, c_in, kh, kw], init_uniform(rng, c_out * fan_in, fan_in))
            .expect("conv init");
        let bias = Tensor::zeros(&[c_out]).into_param();
        Conv2d { weight, bias, pad, stride }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.conv2d_strided(&self.weight, &self.bias, self.pad, self.stride)
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Fully connected layer over row vectors: `[n,in] -> [n,out]`.
pub struct Linear<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn init(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let weight = Tensor::param(
            &[in_features, out_features],
            init_uniform(rng, in_features * out_features, in_features),
        )
        .expect("linear init");
        let bias = Tensor::zeros(&[out_features]).into_param();
        Linear { weight, bias }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}
