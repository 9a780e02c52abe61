//! Dual-path relation modeling for multi-person pose estimation, built from
//! scratch on a minimal autodiff tensor engine and trained end-to-end on
//! synthetic multi-person keypoint scenes.
//!
//! The crate is organized around five layers:
//!
//! - [`tensor`] — dense tensors, reverse-mode autodiff, Adam, and a
//!   finite-difference gradient oracle.
//! - [`relnet`] — the relation core: cross-instance attention (CIM),
//!   cross-joint attention (CJM), adaptive channel-gated fusion (ADFM), the
//!   two complementary branch orders, and the attention-gated pose decoder.
//! - [`pipeline`] — a toy encoder, instance/joint feature decoders,
//!   positional embeddings, losses, and the full forward pass.
//! - [`synth`] — deterministic synthetic scene generation, target
//!   rendering, and PCK evaluation.
//! - [`config`] / [`checkpoint`] / [`commands`] — run configuration,
//!   bit-exact checkpoint IO, and the train / eval / gradcheck / dump-attn
//!   drivers behind the CLI.
//!
//! See `examples/` for one runnable program per capability.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod layers;
pub mod pipeline;
pub mod relnet;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
