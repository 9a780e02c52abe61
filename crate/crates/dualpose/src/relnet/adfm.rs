//! Adaptive feature fusion: squeeze-excite style channel gate over the
//! concatenated inputs, then a 1x1 conv down to the consumer's width.

use rand::Rng;

use crate::dim_err;
use crate::error::Result;
use crate::layers::{Conv2d, Linear};
use crate::tensor::{Scalar, Tensor};

/// Gate reduction ratio of the two-layer MLP.
pub const GATE_REDUCTION: usize = 4;

pub struct AdfmParams<S: Scalar> {
    pub gate_fc1: Linear<S>,
    pub gate_fc2: Linear<S>,
    /// 1x1 conv mapping the gated concat (c_a + c_b channels) to c_out.
    pub fuse: Conv2d<S>,
}

impl<S: Scalar> AdfmParams<S> {
    pub fn init(c_in_total: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        let hidden = (c_in_total / GATE_REDUCTION).max(1);
        AdfmParams {
            gate_fc1: Linear::init(c_in_total, hidden, rng),
            gate_fc2: Linear::init(hidden, c_in_total, rng),
            fuse: Conv2d::init(c_out, c_in_total, (1, 1), (0, 0), (1, 1), rng),
        }
    }

    pub fn in_width(&self) -> usize {
        self.gate_fc2.bias.shape()[0]
    }

    /// `sigmoid(MLP(GAP(concat)))`, one gate value per concat channel.
    pub fn channel_gate(&self, cat: &Tensor<S>) -> Result<Tensor<S>> {
        let pooled = cat.global_avg_pool()?;
        self.gate_fc2.forward(&self.gate_fc1.forward(&pooled)?.relu()?)?.sigmoid()
    }

    fn concat_checked(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let cat = Tensor::concat_channels(&[a.clone(), b.clone()])?;
        if cat.shape()[1] != self.in_width() {
            return Err(dim_err!(
                "fusion configured for {} input channels, got {} + {}",
                self.in_width(),
                a.shape()[1],
                b.shape()[1]
            ));
        }
        Ok(cat)
    }

    /// Gated fusion: concat -> channel gate -> 1x1 conv.
    pub fn fuse_features(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let cat = self.concat_checked(a, b)?;
        let gate = self.channel_gate(&cat)?;
        self.fuse.forward(&cat.mul(&gate)?)
    }

    /// Fusion with the gate removed (ablation): concat -> 1x1 conv.
    pub fn fuse_plain(&self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let cat = self.concat_checked(a, b)?;
        self.fuse.forward(&cat)
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.gate_fc1.for_each(&format!("{prefix}.gate_fc1"), f);
        self.gate_fc2.for_each(&format!("{prefix}.gate_fc2"), f);
        self.fuse.for_each(&format!("{prefix}.fuse"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.gate_fc1.for_each_mut(&format!("{prefix}.gate_fc1"), f);
        self.gate_fc2.for_each_mut(&format!("{prefix}.gate_fc2"), f);
        self.fuse.for_each_mut(&format!("{prefix}.fuse"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed_gate(params: &mut AdfmParams<f64>) {
        params.gate_fc1.weight = Tensor::zeros(params.gate_fc1.weight.shape()).into_param();
        params.gate_fc1.bias = Tensor::zeros(params.gate_fc1.bias.shape()).into_param();
        params.gate_fc2.weight = Tensor::zeros(params.gate_fc2.weight.shape()).into_param();
        params.gate_fc2.bias = Tensor::zeros(params.gate_fc2.bias.shape()).into_param();
    }

    #[test]
    fn zero_mlp_gates_at_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params: AdfmParams<f64> = AdfmParams::init(5, 2, &mut rng);
        zeroed_gate(&mut params);
        let a = Tensor::from_f64s(&[1, 3, 2, 2], &[0.3; 12]).unwrap();
        let b = Tensor::from_f64s(&[1, 2, 2, 2], &[-0.7; 8]).unwrap();
        let cat = Tensor::concat_channels(&[a.clone(), b.clone()]).unwrap();
        let gate = params.channel_gate(&cat).unwrap();
        assert!(gate.data().iter().all(|&g| g == 0.5));
        // Fused output equals the conv applied to the half-scaled concat.
        let fused = params.fuse_features(&a, &b).unwrap();
        let reference = params.fuse.forward(&cat.scale(0.5).unwrap()).unwrap();
        for (x, y) in fused.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn large_negative_gate_bias_leaves_only_the_conv_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params: AdfmParams<f64> = AdfmParams::init(4, 3, &mut rng);
        zeroed_gate(&mut params);
        params.gate_fc2.bias = Tensor::from_f64s(&[4], &[-50.0; 4]).unwrap().into_param();
        params.fuse.bias =
            Tensor::from_f64s(&[3], &[0.25, -1.5, 4.0]).unwrap().into_param();
        let a = Tensor::from_f64s(&[1, 2, 1, 2], &[3.0; 4]).unwrap();
        let b = Tensor::from_f64s(&[1, 2, 1, 2], &[-2.0; 4]).unwrap();
        let out = params.fuse_features(&a, &b).unwrap();
        for c in 0..3 {
            for p in 0..2 {
                let v = out.data()[c * 2 + p];
                assert!((v - params.fuse.bias.data()[c]).abs() < 1e-6, "channel {c}: {v}");
            }
        }
    }

    #[test]
    fn gate_width_and_output_channels_follow_the_placement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, k) = (8usize, 5usize);
        let params: AdfmParams<f64> = AdfmParams::init(d + k, k, &mut rng);
        assert_eq!(params.in_width(), 13);
        let a = Tensor::zeros(&[2, d, 3, 3]);
        let b = Tensor::zeros(&[2, k, 3, 3]);
        let cat = Tensor::concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(params.channel_gate(&cat).unwrap().shape(), &[2, 13]);
        let out = params.fuse_features(&a, &b).unwrap();
        assert_eq!(out.shape(), &[2, k, 3, 3]);
    }

    #[test]
    fn mismatched_channels_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params: AdfmParams<f64> = AdfmParams::init(6, 2, &mut rng);
        let a = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        let b = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        assert!(params.fuse_features(&a, &b).is_err());
    }
}
