//! Cross-joint interaction: per-instance attention over joint maps with
//! three learned 1x1 projections. Instances never mix here.

use rand::Rng;

use crate::dim_err;
use crate::error::Result;
use crate::layers::Conv2d;
use crate::tensor::{Scalar, Tensor};

/// Row-stochastic joint attention per instance, plus raw logits.
pub struct JointAttention<S: Scalar> {
    /// `[N,K,K]`, each `[K,K]` slice row-stochastic.
    pub weights: Tensor<S>,
    /// `[N,K,K]` pre-softmax scores.
    pub logits: Tensor<S>,
}

/// The three 1x1 joint feature extractors (square K -> K mapping).
pub struct CjmParams<S: Scalar> {
    pub conv_q: Conv2d<S>,
    pub conv_k: Conv2d<S>,
    pub conv_v: Conv2d<S>,
}

impl<S: Scalar> CjmParams<S> {
    pub fn init(joints: usize, rng: &mut impl Rng) -> Self {
        CjmParams {
            conv_q: Conv2d::init(joints, joints, (1, 1), (0, 0), (1, 1), rng),
            conv_k: Conv2d::init(joints, joints, (1, 1), (0, 0), (1, 1), rng),
            conv_v: Conv2d::init(joints, joints, (1, 1), (0, 0), (1, 1), rng),
        }
    }

    /// Identity Q/K/V with zero biases; used by tests and oracles.
    pub fn identity(joints: usize) -> Self {
        let eye = |_: ()| {
            let mut w = vec![S::zero(); joints * joints];
            for i in 0..joints {
                w[i * joints + i] = S::one();
            }
            Conv2d {
                weight: Tensor::param(&[joints, joints, 1, 1], w).expect("identity conv"),
                bias: Tensor::zeros(&[joints]).into_param(),
                pad: (0, 0),
                stride: (1, 1),
            }
        };
        CjmParams { conv_q: eye(()), conv_k: eye(()), conv_v: eye(()) }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.conv_q.for_each(&format!("{prefix}.conv_q"), f);
        self.conv_k.for_each(&format!("{prefix}.conv_k"), f);
        self.conv_v.for_each(&format!("{prefix}.conv_v"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.conv_q.for_each_mut(&format!("{prefix}.conv_q"), f);
        self.conv_k.for_each_mut(&format!("{prefix}.conv_k"), f);
        self.conv_v.for_each_mut(&format!("{prefix}.conv_v"), f);
    }
}

/// Per-instance joint attention and the residual-enhanced joint maps.
///
/// Each joint map is flattened to one row; attention logits are the
/// `Q · K^T` affinities between rows of the same instance.
pub fn cjm_forward<S: Scalar>(
    f_joint: &Tensor<S>,
    params: &CjmParams<S>,
) -> Result<(Tensor<S>, JointAttention<S>)> {
    if f_joint.shape().len() != 4 {
        return Err(dim_err!("joint features must be [N,K,h,w], got {:?}", f_joint.shape()));
    }
    let (n, k, h, w) = (
        f_joint.shape()[0],
        f_joint.shape()[1],
        f_joint.shape()[2],
        f_joint.shape()[3],
    );
    if params.conv_q.c_out() != k {
        return Err(dim_err!("cjm configured for {} joints, got {k}", params.conv_q.c_out()));
    }
    let hw = h * w;
    let q = params.conv_q.forward(f_joint)?.reshape(&[n, k, hw])?;
    let key = params.conv_k.forward(f_joint)?.reshape(&[n, k, hw])?.transpose_last2()?;
    let v = params.conv_v.forward(f_joint)?.reshape(&[n, k, hw])?;
    let logits = q.bmm(&key)?;
    let weights = logits.softmax_rows()?;
    let out = weights.bmm(&v)?.reshape(f_joint.shape())?.add(f_joint)?;
    Ok((out, JointAttention { weights, logits }))
}
