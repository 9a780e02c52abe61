//! Evaluation driver: inference over a seeded scene split, PCK summary.

use std::path::Path;

use crate::config::RunConfig;
use crate::config_err;
use crate::error::Result;
use crate::pipeline::{decode_pose, forward_full, ForwardMode, Model, PEAK_THRESHOLD};
use crate::synth::{generate_scene, pck_evaluate, MetricReport, PckAccumulator};

/// PCK radius as a fraction of each person's extent.
pub const PCK_RADIUS_FRAC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Heldout,
}

/// Detection-mode inference over one split's scenes, aggregated PCK.
pub fn evaluate_model(model: &Model<f32>, config: &RunConfig, split: Split) -> Result<MetricReport> {
    let scene_cfg = config.scene_config();
    let branch = config.branch_config();
    let count = match split {
        Split::Train => config.train_seeds.min(config.eval_seeds),
        Split::Heldout => config.eval_seeds,
    };
    let mut acc = PckAccumulator::default();
    for idx in 0..count {
        let seed = match split {
            Split::Train => config.scene_seed(idx),
            Split::Heldout => config.eval_scene_seed(idx),
        };
        let scene = generate_scene(seed, &scene_cfg)?;
        let mode = ForwardMode::Infer {
            peak_threshold: PEAK_THRESHOLD,
            max_instances: config.n_max,
        };
        let out = forward_full(model, &scene.image_tensor()?, &mode, &branch)?;
        let preds = match &out.heatmaps {
            Some(maps) => decode_pose(maps)?,
            None => Vec::new(),
        };
        acc.add(&pck_evaluate(&preds, &scene, PCK_RADIUS_FRAC)?);
    }
    Ok(acc.finish())
}

/// `eval --ckpt <path> --config <path>`: read-only evaluation of a stored
/// model against the config's held-out scene range.
pub fn cmd_eval(ckpt_path: &Path, config_path: &Path, seed_override: Option<u64>) -> Result<MetricReport> {
    let ckpt = crate::checkpoint::load_checkpoint(ckpt_path)?;
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let stored = ckpt.config()?;
    if stored.model_dims() != config.model_dims() {
        return Err(config_err!(
            "checkpoint dims {:?} do not match config dims {:?}",
            stored.model_dims(),
            config.model_dims()
        ));
    }
    let model = ckpt.to_model()?;
    let report = evaluate_model(&model, &config, Split::Heldout)?;
    println!(
        "pck@{:.2} = {:.4} over {} held-out scenes ({} joints)",
        PCK_RADIUS_FRAC,
        report.pck,
        config.eval_seeds,
        report.per_joint_total.iter().sum::<usize>()
    );
    for (k, (&hits, &total)) in
        report.per_joint_hits.iter().zip(&report.per_joint_total).enumerate()
    {
        let frac = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
        println!("  joint {k}: {hits}/{total} = {frac:.4}");
    }
    Ok(report)
}
