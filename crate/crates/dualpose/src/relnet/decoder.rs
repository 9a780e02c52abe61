//! Pose decoder: sequential channel and spatial attention gates over the
//! concatenated branch features, then two convs down to joint heatmaps.

use rand::Rng;

use crate::error::Result;
use crate::layers::{Conv2d, Linear};
use crate::relnet::adfm::GATE_REDUCTION;
use crate::tensor::{Scalar, Tensor};

pub struct DecoderParams<S: Scalar> {
    /// Shared MLP applied to both the avg- and max-pooled descriptors.
    pub ca_fc1: Linear<S>,
    pub ca_fc2: Linear<S>,
    /// 7x7 conv over the stacked channel-avg/channel-max maps, 2 -> 1.
    pub sa_conv: Conv2d<S>,
    /// 3x3 mixer kept at full width, then 1x1 projection to K channels.
    pub head1: Conv2d<S>,
    pub head2: Conv2d<S>,
}

impl<S: Scalar> DecoderParams<S> {
    /// `c_in` is the concatenated branch width (K + d); `joints` the output K.
    pub fn init(c_in: usize, joints: usize, rng: &mut impl Rng) -> Self {
        let hidden = (c_in / GATE_REDUCTION).max(1);
        DecoderParams {
            ca_fc1: Linear::init(c_in, hidden, rng),
            ca_fc2: Linear::init(hidden, c_in, rng),
            sa_conv: Conv2d::init(1, 2, (7, 7), (3, 3), (1, 1), rng),
            head1: Conv2d::init(c_in, c_in, (3, 3), (1, 1), (1, 1), rng),
            head2: Conv2d::init(joints, c_in, (1, 1), (0, 0), (1, 1), rng),
        }
    }

    /// Channel gate in (0,1)^C: shared MLP over avg- and max-pooled
    /// descriptors, summed, sigmoid.
    pub fn channel_gate(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let avg = self.ca_fc2.forward(&self.ca_fc1.forward(&x.global_avg_pool()?)?.relu()?)?;
        let max = self.ca_fc2.forward(&self.ca_fc1.forward(&x.global_max_pool()?)?.relu()?)?;
        avg.add(&max)?.sigmoid()
    }

    /// Spatial gate in (0,1)^[N,1,h,w]: 7x7 conv over channel statistics.
    pub fn spatial_gate(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let stats = Tensor::concat_channels(&[x.channel_mean()?, x.channel_max()?])?;
        self.sa_conv.forward(&stats)?.sigmoid()
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.ca_fc1.for_each(&format!("{prefix}.ca_fc1"), f);
        self.ca_fc2.for_each(&format!("{prefix}.ca_fc2"), f);
        self.sa_conv.for_each(&format!("{prefix}.sa_conv"), f);
        self.head1.for_each(&format!("{prefix}.head1"), f);
        self.head2.for_each(&format!("{prefix}.head2"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.ca_fc1.for_each_mut(&format!("{prefix}.ca_fc1"), f);
        self.ca_fc2.for_each_mut(&format!("{prefix}.ca_fc2"), f);
        self.sa_conv.for_each_mut(&format!("{prefix}.sa_conv"), f);
        self.head1.for_each_mut(&format!("{prefix}.head1"), f);
        self.head2.for_each_mut(&format!("{prefix}.head2"), f);
    }
}

/// Decode joint heatmaps from the two branch features.
///
/// Channel concat, channel then spatial gating (skipped when `use_gates`
/// is off), a 3x3 conv with relu, and a linear 1x1 projection. No output
/// nonlinearity: heatmaps are regression targets.
pub fn pose_decode<S: Scalar>(
    f_ij: &Tensor<S>,
    f_ji: &Tensor<S>,
    params: &DecoderParams<S>,
    use_gates: bool,
) -> Result<Tensor<S>> {
    let cat = Tensor::concat_channels(&[f_ij.clone(), f_ji.clone()])?;
    let gated = if use_gates {
        let x = cat.mul(&params.channel_gate(&cat)?)?;
        let sg = params.spatial_gate(&x)?;
        x.mul(&sg)?
    } else {
        cat
    };
    params.head2.forward(&params.head1.forward(&gated)?.relu()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        use rand::Rng as _;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_f64s(shape, &data).unwrap()
    }

    #[test]
    fn zero_input_and_zero_biases_give_zero_heatmaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params: DecoderParams<f64> = DecoderParams::init(5, 2, &mut rng);
        // Biases initialize to zero; a zero input stays zero through convs.
        let f_ij = Tensor::zeros(&[2, 2, 4, 4]);
        let f_ji = Tensor::zeros(&[2, 3, 4, 4]);
        let out = pose_decode(&f_ij, &f_ji, &params, true).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_is_n_k_h_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params: DecoderParams<f64> = DecoderParams::init(7, 4, &mut rng);
        let f_ij = rand_t(&mut rng, &[3, 4, 5, 5]);
        let f_ji = rand_t(&mut rng, &[3, 3, 5, 5]);
        let out = pose_decode(&f_ij, &f_ji, &params, true).unwrap();
        assert_eq!(out.shape(), &[3, 4, 5, 5]);
    }

    #[test]
    fn gates_lie_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params: DecoderParams<f64> = DecoderParams::init(6, 3, &mut rng);
        let x = rand_t(&mut rng, &[2, 6, 4, 4]);
        let cg = params.channel_gate(&x).unwrap();
        assert!(cg.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let sg = params.spatial_gate(&x).unwrap();
        assert_eq!(sg.shape(), &[2, 1, 4, 4]);
        assert!(sg.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn mismatched_spatial_shapes_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params: DecoderParams<f64> = DecoderParams::init(5, 2, &mut rng);
        let f_ij = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let f_ji = Tensor::<f64>::zeros(&[1, 3, 5, 5]);
        assert!(pose_decode(&f_ij, &f_ji, &params, true).is_err());
    }
}
