//! Toy end-to-end model around the relation core: a stride-4 conv encoder,
//! center-map instance decoding with Gaussian soft masks, a shared joint
//! head, sinusoidal positional embeddings from center maxima, the dual-path
//! interaction module and the pose decoder, plus the composite loss.

mod losses;
mod positional;
mod stages;

pub use losses::{focal_center_loss, heatmap_mse_loss, total_loss, LossReport};
pub use positional::{argmax_coord, positional_embedding};
pub use stages::{render_gaussian_into, DecodedInstances, InstanceSource};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config_err;
use crate::error::Result;
use crate::layers::Conv2d;
use crate::relnet::{dim_forward, pose_decode, AttentionBundle, BranchConfig, DecoderParams, DimParams};
use crate::tensor::{Scalar, Tensor};

/// Encoder stride from input pixels to the feature grid.
pub const STRIDE: usize = 4;

/// Soft instance masks: Gaussian width in feature pixels.
pub const SIGMA_MASK: f64 = 2.0;

/// Rendered target Gaussians: width in feature pixels.
pub const SIGMA_TARGET: f64 = 1.5;

/// Center-map peak threshold used at inference.
pub const PEAK_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Encoder output channels.
    pub c: usize,
    /// Instance feature channels.
    pub d: usize,
    /// Joints per person.
    pub k: usize,
    pub input_h: usize,
    pub input_w: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.input_h % STRIDE != 0 || self.input_w % STRIDE != 0 {
            return Err(config_err!(
                "input size {}x{} must be divisible by the encoder stride {STRIDE}",
                self.input_h,
                self.input_w
            ));
        }
        if self.c == 0 || self.d == 0 || self.k == 0 {
            return Err(config_err!("model dims must be positive: {self:?}"));
        }
        if self.d % 2 != 0 {
            return Err(config_err!("instance dimension d = {} must be even", self.d));
        }
        Ok(())
    }

    pub fn feat_h(&self) -> usize {
        self.input_h / STRIDE
    }

    pub fn feat_w(&self) -> usize {
        self.input_w / STRIDE
    }
}

pub struct EncoderParams<S: Scalar> {
    pub conv1: Conv2d<S>,
    pub conv2: Conv2d<S>,
    pub conv3: Conv2d<S>,
}

pub struct InstanceHeadParams<S: Scalar> {
    pub center_conv1: Conv2d<S>,
    pub center_conv2: Conv2d<S>,
    /// 1x1 projection of masked visual features to d channels.
    pub embed: Conv2d<S>,
}

pub struct JointHeadParams<S: Scalar> {
    pub conv1: Conv2d<S>,
    pub conv2: Conv2d<S>,
}

/// All learnable parameters, addressable by unique names for checkpointing
/// and optimization.
pub struct Model<S: Scalar> {
    pub dims: ModelDims,
    pub encoder: EncoderParams<S>,
    pub inst_head: InstanceHeadParams<S>,
    pub joint_head: JointHeadParams<S>,
    pub dim: DimParams<S>,
    pub decoder: DecoderParams<S>,
}

impl<S: Scalar> Model<S> {
    /// Seeded initialization; identical seeds give identical parameters.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mid = (dims.c / 2).max(1);
        let encoder = EncoderParams {
            conv1: Conv2d::init(mid, 3, (3, 3), (1, 1), (2, 2), &mut rng),
            conv2: Conv2d::init(dims.c, mid, (3, 3), (1, 1), (2, 2), &mut rng),
            conv3: Conv2d::init(dims.c, dims.c, (3, 3), (1, 1), (1, 1), &mut rng),
        };
        let inst_head = InstanceHeadParams {
            center_conv1: Conv2d::init(mid, dims.c, (3, 3), (1, 1), (1, 1), &mut rng),
            center_conv2: Conv2d::init(1, mid, (1, 1), (0, 0), (1, 1), &mut rng),
            embed: Conv2d::init(dims.d, dims.c, (1, 1), (0, 0), (1, 1), &mut rng),
        };
        let joint_head = JointHeadParams {
            conv1: Conv2d::init(dims.d, dims.c + dims.d, (3, 3), (1, 1), (1, 1), &mut rng),
            conv2: Conv2d::init(dims.k, dims.d, (1, 1), (0, 0), (1, 1), &mut rng),
        };
        let dim = DimParams::init(dims.d, dims.k, &mut rng);
        let decoder = DecoderParams::init(dims.k + dims.d, dims.k, &mut rng);
        Ok(Model { dims, encoder, inst_head, joint_head, dim, decoder })
    }

    pub fn for_each_param(&self, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.encoder.conv1.for_each("enc.conv1", f);
        self.encoder.conv2.for_each("enc.conv2", f);
        self.encoder.conv3.for_each("enc.conv3", f);
        self.inst_head.center_conv1.for_each("inst.center_conv1", f);
        self.inst_head.center_conv2.for_each("inst.center_conv2", f);
        self.inst_head.embed.for_each("inst.embed", f);
        self.joint_head.conv1.for_each("joint.conv1", f);
        self.joint_head.conv2.for_each("joint.conv2", f);
        self.dim.for_each("dim", f);
        self.decoder.for_each("dec", f);
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.encoder.conv1.for_each_mut("enc.conv1", f);
        self.encoder.conv2.for_each_mut("enc.conv2", f);
        self.encoder.conv3.for_each_mut("enc.conv3", f);
        self.inst_head.center_conv1.for_each_mut("inst.center_conv1", f);
        self.inst_head.center_conv2.for_each_mut("inst.center_conv2", f);
        self.inst_head.embed.for_each_mut("inst.embed", f);
        self.joint_head.conv1.for_each_mut("joint.conv1", f);
        self.joint_head.conv2.for_each_mut("joint.conv2", f);
        self.dim.for_each_mut("dim", f);
        self.decoder.for_each_mut("dec", f);
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |name, _| names.push(name));
        names
    }

    pub fn clear_grads(&self) {
        self.for_each_param(&mut |_, t| t.clear_grad());
    }
}

/// Ground-truth tensors a training step compares against.
pub struct TrainTargets<'a, S: Scalar> {
    /// Input-resolution center coordinates, one per instance.
    pub centers: &'a [(f64, f64)],
    /// `[1,1,h,w]` rendered center map.
    pub center_map: &'a Tensor<S>,
    /// `[N,K,h,w]` rendered joint heatmaps; absent for empty scenes.
    pub heatmaps: Option<&'a Tensor<S>>,
    pub alpha: f64,
}

pub enum ForwardMode<'a, S: Scalar> {
    /// Teacher forcing: masks are rendered at ground-truth centers and the
    /// composite loss is computed.
    Train(TrainTargets<'a, S>),
    /// Detection: instances come from center-map peaks.
    Infer { peak_threshold: f64, max_instances: usize },
}

pub struct ForwardOutput<S: Scalar> {
    /// `[N,K,h,w]` heatmaps; absent when the scene resolves to no instances.
    pub heatmaps: Option<Tensor<S>>,
    /// `[1,1,h,w]` predicted center map.
    pub center_pred: Tensor<S>,
    /// Feature-grid `(x, y)` per instance.
    pub instance_centers: Vec<(usize, usize)>,
    pub attention: AttentionBundle<S>,
    /// Scalar loss tensor plus its report, in training mode.
    pub loss: Option<(Tensor<S>, LossReport)>,
}

/// The whole network: encode, decode instances and joints, embed positions,
/// run the configured branches, decode heatmaps, and (in training mode)
/// compute the composite loss.
pub fn forward_full<S: Scalar>(
    model: &Model<S>,
    image: &Tensor<S>,
    mode: &ForwardMode<'_, S>,
    config: &BranchConfig,
) -> Result<ForwardOutput<S>> {
    let f = model.encode(image)?;
    let source = match mode {
        ForwardMode::Train(t) => InstanceSource::Centers(t.centers),
        ForwardMode::Infer { peak_threshold, max_instances } => {
            InstanceSource::Detect { threshold: *peak_threshold, max_instances: *max_instances }
        }
    };
    let decoded = model.decode_instances(&f, &source)?;

    let (heatmaps, attention) = match &decoded.features {
        Some(f_inst) => {
            let f_joint = model.decode_joints(&f, f_inst)?;
            let f_pos = positional_embedding(
                &decoded.centers_feat,
                (model.dims.feat_h(), model.dims.feat_w()),
                model.dims.d,
            )?;
            let (f_ij, f_ji, bundle) = dim_forward(f_inst, &f_joint, &f_pos, config, &model.dim)?;
            let maps = pose_decode(&f_ij, &f_ji, &model.decoder, config.adfm_in_decoder)?;
            (Some(maps), bundle)
        }
        // Empty scenes bypass interaction modeling and the decoder.
        None => (None, AttentionBundle::default()),
    };

    let loss = match mode {
        ForwardMode::Train(t) => {
            let l_inst = focal_center_loss(&decoded.center_pred, t.center_map)?;
            let l_joint = heatmap_mse_loss(heatmaps.as_ref(), t.heatmaps)?;
            Some(total_loss(&l_inst, &l_joint, t.alpha)?)
        }
        ForwardMode::Infer { .. } => None,
    };

    Ok(ForwardOutput {
        heatmaps,
        center_pred: decoded.center_pred,
        instance_centers: decoded.centers_feat,
        attention,
        loss,
    })
}

/// Read joint coordinates out of heatmaps: per-joint argmax (first
/// row-major index on ties) scaled back to input resolution.
pub fn decode_pose<S: Scalar>(heatmaps: &Tensor<S>) -> Result<Vec<Vec<(f64, f64)>>> {
    if heatmaps.shape().len() != 4 {
        return Err(crate::dim_err!("heatmaps must be [N,K,h,w], got {:?}", heatmaps.shape()));
    }
    let (n, k, h, w) = (
        heatmaps.shape()[0],
        heatmaps.shape()[1],
        heatmaps.shape()[2],
        heatmaps.shape()[3],
    );
    let mut poses = Vec::with_capacity(n);
    for ni in 0..n {
        let mut joints = Vec::with_capacity(k);
        for ki in 0..k {
            let base = (ni * k + ki) * h * w;
            let (x, y) = argmax_coord(&heatmaps.data()[base..base + h * w], h, w);
            joints.push(((x * STRIDE) as f64, (y * STRIDE) as f64));
        }
        poses.push(joints);
    }
    Ok(poses)
}
