//! The dual-path interaction module: two branches running cross-instance
//! and cross-joint modeling in complementary orders, with ablation toggles
//! covering single-branch and single-level variants.

use rand::Rng;

use crate::config_err;
use crate::error::Result;
use crate::relnet::adfm::AdfmParams;
use crate::relnet::cim::{cim_forward, InstanceAttention};
use crate::relnet::cjm::{cjm_forward, CjmParams, JointAttention};
use crate::tensor::{Scalar, Tensor};

/// Which interaction structure runs. The variants are the supported designs;
/// arbitrary module combinations are intentionally not constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchVariant {
    /// Both branches, both modules each.
    Full,
    /// No interaction modeling at all: raw features pass through.
    Baseline,
    /// Instance-joint branch only.
    IjrOnly,
    /// Joint-instance branch only.
    JirOnly,
    /// Cross-instance modeling in both branches, no cross-joint.
    CimBoth,
    /// Cross-joint modeling in both branches, no cross-instance.
    CjmBoth,
}

impl BranchVariant {
    pub const ALL: [BranchVariant; 6] = [
        BranchVariant::Full,
        BranchVariant::Baseline,
        BranchVariant::IjrOnly,
        BranchVariant::JirOnly,
        BranchVariant::CimBoth,
        BranchVariant::CjmBoth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BranchVariant::Full => "full",
            BranchVariant::Baseline => "baseline",
            BranchVariant::IjrOnly => "ijr_only",
            BranchVariant::JirOnly => "jir_only",
            BranchVariant::CimBoth => "cim_both",
            BranchVariant::CjmBoth => "cjm_both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BranchVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                config_err!(
                    "unknown branch variant '{s}' (expected one of full, baseline, ijr_only, jir_only, cim_both, cjm_both)"
                )
            })
    }
}

/// Branch structure plus the fusion-gate ablation flags.
#[derive(Debug, Clone, Copy)]
pub struct BranchConfig {
    pub variant: BranchVariant,
    /// Channel gates inside the two branch fusions.
    pub adfm_in_dim: bool,
    /// Attention gates inside the pose decoder.
    pub adfm_in_decoder: bool,
}

impl BranchConfig {
    pub fn new(variant: BranchVariant) -> Self {
        BranchConfig { variant, adfm_in_dim: true, adfm_in_decoder: true }
    }

    pub fn full() -> Self {
        Self::new(BranchVariant::Full)
    }

    pub fn enable_ijr(&self) -> bool {
        !matches!(self.variant, BranchVariant::Baseline | BranchVariant::JirOnly)
    }

    pub fn enable_jir(&self) -> bool {
        !matches!(self.variant, BranchVariant::Baseline | BranchVariant::IjrOnly)
    }

    pub fn ijr_uses_cim(&self) -> bool {
        !matches!(self.variant, BranchVariant::CjmBoth)
    }

    pub fn ijr_uses_cjm(&self) -> bool {
        !matches!(self.variant, BranchVariant::CimBoth)
    }

    pub fn jir_uses_cjm(&self) -> bool {
        !matches!(self.variant, BranchVariant::CimBoth)
    }

    pub fn jir_uses_cim(&self) -> bool {
        !matches!(self.variant, BranchVariant::CjmBoth)
    }
}

/// Learned pieces of both branches. The cross-joint projections and the
/// fusion convs are per branch; cross-instance attention owns no weights.
pub struct DimParams<S: Scalar> {
    pub ijr_cjm: CjmParams<S>,
    pub jir_cjm: CjmParams<S>,
    /// Fuses (instance-mixed, joint) down to K channels.
    pub ijr_adfm: AdfmParams<S>,
    /// Fuses (joint-mixed, instance) down to d channels.
    pub jir_adfm: AdfmParams<S>,
}

impl<S: Scalar> DimParams<S> {
    pub fn init(d: usize, joints: usize, rng: &mut impl Rng) -> Self {
        DimParams {
            ijr_cjm: CjmParams::init(joints, rng),
            jir_cjm: CjmParams::init(joints, rng),
            ijr_adfm: AdfmParams::init(d + joints, joints, rng),
            jir_adfm: AdfmParams::init(d + joints, d, rng),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.ijr_cjm.for_each(&format!("{prefix}.ijr.cjm"), f);
        self.jir_cjm.for_each(&format!("{prefix}.jir.cjm"), f);
        self.ijr_adfm.for_each(&format!("{prefix}.ijr.adfm"), f);
        self.jir_adfm.for_each(&format!("{prefix}.jir.adfm"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.ijr_cjm.for_each_mut(&format!("{prefix}.ijr.cjm"), f);
        self.jir_cjm.for_each_mut(&format!("{prefix}.jir.cjm"), f);
        self.ijr_adfm.for_each_mut(&format!("{prefix}.ijr.adfm"), f);
        self.jir_adfm.for_each_mut(&format!("{prefix}.jir.adfm"), f);
    }
}

/// Attention maps retained for dumping, keyed by branch.
pub struct AttentionBundle<S: Scalar> {
    pub ijr_instance: Option<InstanceAttention<S>>,
    pub ijr_joint: Option<JointAttention<S>>,
    pub jir_instance: Option<InstanceAttention<S>>,
    pub jir_joint: Option<JointAttention<S>>,
}

impl<S: Scalar> Default for AttentionBundle<S> {
    fn default() -> Self {
        AttentionBundle { ijr_instance: None, ijr_joint: None, jir_instance: None, jir_joint: None }
    }
}

impl<S: Scalar> AttentionBundle<S> {
    fn empty() -> Self {
        Self::default()
    }
}

fn fuse<S: Scalar>(
    adfm: &AdfmParams<S>,
    a: &Tensor<S>,
    b: &Tensor<S>,
    gated: bool,
) -> Result<Tensor<S>> {
    if gated {
        adfm.fuse_features(a, b)
    } else {
        adfm.fuse_plain(a, b)
    }
}

/// Coarse-to-fine branch: instance mixing, fusion with joints, joint mixing.
/// Returns `[N,K,h,w]`.
pub fn ijr_branch<S: Scalar>(
    f_inst: &Tensor<S>,
    f_joint: &Tensor<S>,
    f_pos: &Tensor<S>,
    cjm: &CjmParams<S>,
    adfm: &AdfmParams<S>,
    config: &BranchConfig,
) -> Result<BranchOutputParts<S>> {
    let (inst_mixed, instance_attention) = if config.ijr_uses_cim() {
        let (o, a) = cim_forward(f_inst, f_pos)?;
        (o, Some(a))
    } else {
        (f_inst.clone(), None)
    };
    let fused = fuse(adfm, &inst_mixed, f_joint, config.adfm_in_dim)?;
    let (features, joint_attention) = if config.ijr_uses_cjm() {
        let (o, a) = cjm_forward(&fused, cjm)?;
        (o, Some(a))
    } else {
        (fused, None)
    };
    Ok((features, instance_attention, joint_attention))
}

/// Fine-to-coarse branch: joint mixing, fusion with instances, instance
/// mixing (reusing the same positional embedding). Returns `[N,d,h,w]`.
pub fn jir_branch<S: Scalar>(
    f_inst: &Tensor<S>,
    f_joint: &Tensor<S>,
    f_pos: &Tensor<S>,
    cjm: &CjmParams<S>,
    adfm: &AdfmParams<S>,
    config: &BranchConfig,
) -> Result<BranchOutputParts<S>> {
    let (joint_mixed, joint_attention) = if config.jir_uses_cjm() {
        let (o, a) = cjm_forward(f_joint, cjm)?;
        (o, Some(a))
    } else {
        (f_joint.clone(), None)
    };
    let fused = fuse(adfm, &joint_mixed, f_inst, config.adfm_in_dim)?;
    let (features, instance_attention) = if config.jir_uses_cim() {
        let (o, a) = cim_forward(&fused, f_pos)?;
        (o, Some(a))
    } else {
        (fused, None)
    };
    Ok((features, instance_attention, joint_attention))
}

pub type BranchOutputParts<S> = (Tensor<S>, Option<InstanceAttention<S>>, Option<JointAttention<S>>);

/// Run the configured branches.
///
/// Returns `(joint-flavored [N,K,h,w], instance-flavored [N,d,h,w])`.
/// A disabled branch passes the corresponding raw feature through so the
/// decoder sees stable per-slot widths in every configuration.
pub fn dim_forward<S: Scalar>(
    f_inst: &Tensor<S>,
    f_joint: &Tensor<S>,
    f_pos: &Tensor<S>,
    config: &BranchConfig,
    params: &DimParams<S>,
) -> Result<(Tensor<S>, Tensor<S>, AttentionBundle<S>)> {
    let mut bundle = AttentionBundle::empty();

    let f_ij = if config.enable_ijr() {
        let (features, inst_att, joint_att) =
            ijr_branch(f_inst, f_joint, f_pos, &params.ijr_cjm, &params.ijr_adfm, config)?;
        bundle.ijr_instance = inst_att;
        bundle.ijr_joint = joint_att;
        features
    } else {
        f_joint.clone()
    };

    let f_ji = if config.enable_jir() {
        let (features, inst_att, joint_att) =
            jir_branch(f_inst, f_joint, f_pos, &params.jir_cjm, &params.jir_adfm, config)?;
        bundle.jir_instance = inst_att;
        bundle.jir_joint = joint_att;
        features
    } else {
        f_inst.clone()
    };

    Ok((f_ij, f_ji, bundle))
}
