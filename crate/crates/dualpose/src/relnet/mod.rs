//! The relation core: cross-instance attention, cross-joint attention,
//! adaptive fusion, the two complementary branch orders, and the
//! attention-gated pose decoder.
//!
//! Tensor layout conventions used throughout: instance features are
//! `[N,d,h,w]`, joint features `[N,K,h,w]`, positional embeddings `[N,p]`.

pub mod adfm;
pub mod cim;
pub mod cjm;
pub mod decoder;
pub mod dim;

pub use adfm::AdfmParams;
pub use cim::{cim_attention, cim_forward, InstanceAttention};
pub use cjm::{cjm_forward, CjmParams, JointAttention};
pub use decoder::{pose_decode, DecoderParams};
pub use dim::{
    dim_forward, ijr_branch, jir_branch, AttentionBundle, BranchConfig, BranchVariant, DimParams,
};
