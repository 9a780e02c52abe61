//! Training driver: seeded scene stream, Adam updates, step-fraction
//! learning-rate drops, CSV logging.

use std::io::Write;
use std::path::Path;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::error::Result;
use crate::numeric_err;
use crate::pipeline::{forward_full, ForwardMode, Model, TrainTargets, SIGMA_TARGET, STRIDE};
use crate::synth::{generate_scene, render_targets};
use crate::tensor::adam::Adam;

pub struct TrainOutcome {
    pub model: Model<f32>,
    /// One `step,l_inst,l_joint,total,lr` line per step.
    pub log_lines: Vec<String>,
}

/// Run the configured number of steps from a fresh initialization.
/// Deterministic: identical configs give bit-identical parameters.
pub fn train_model(config: &RunConfig, quiet: bool) -> Result<TrainOutcome> {
    let mut model: Model<f32> = Model::init(config.model_dims(), config.seed)?;
    let mut adam: Adam<f32> = Adam::new(config.adam_hyper());
    let scene_cfg = config.scene_config();
    let branch = config.branch_config();
    let drops = config.lr_drop_steps();

    let mut log_lines = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        if drops.contains(&step) && step > 0 {
            adam.hyper.lr *= 0.1;
            if !quiet {
                println!("step {step}: learning rate dropped to {}", adam.hyper.lr);
            }
        }
        let scene_seed = config.scene_seed(step % config.train_seeds);
        let scene = generate_scene(scene_seed, &scene_cfg)?;
        let (center_map, heatmaps) = render_targets::<f32>(&scene, SIGMA_TARGET, STRIDE)?;
        let centers = scene.centers();
        let mode = ForwardMode::Train(TrainTargets {
            centers: &centers,
            center_map: &center_map,
            heatmaps: heatmaps.as_ref(),
            alpha: config.alpha,
        });
        let out = forward_full(&model, &scene.image_tensor()?, &mode, &branch)?;
        let (loss, report) = out.loss.expect("training mode always yields a loss");
        if !report.total.is_finite() {
            return Err(numeric_err!(
                "non-finite loss at step {step} (scene seed {scene_seed}): \
                 l_inst={} l_joint={}",
                report.l_inst,
                report.l_joint
            ));
        }
        loss.backward()?;

        let mut opt_err: Option<crate::Error> = None;
        model.for_each_param_mut(&mut |name, t| {
            if opt_err.is_some() {
                return;
            }
            match adam.step_param(&name, t) {
                Ok(updated) => *t = updated,
                Err(e) => opt_err = Some(e),
            }
        });
        if let Some(e) = opt_err {
            return Err(e);
        }

        log_lines.push(format!(
            "{step},{:.6},{:.6},{:.6},{}",
            report.l_inst, report.l_joint, report.total, adam.hyper.lr
        ));
        if !quiet && (step % 250 == 0 || step + 1 == config.steps) {
            println!(
                "step {step}: l_inst {:.4} l_joint {:.4} total {:.4}",
                report.l_inst, report.l_joint, report.total
            );
        }
    }
    Ok(TrainOutcome { model, log_lines })
}

/// `train --config <path> --out <ckpt>`: train, write the checkpoint and an
/// append-only CSV log next to it (`<ckpt>.log`).
pub fn cmd_train(config_path: &Path, out_path: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let outcome = train_model(&config, false)?;
    let ckpt = Checkpoint::from_model(&outcome.model, &config, config.steps as u64);
    save_checkpoint(out_path, &ckpt)?;

    let log_path = out_path.with_extension("log");
    let mut log = std::fs::OpenOptions::new().create(true).append(true).open(&log_path)?;
    for line in &outcome.log_lines {
        writeln!(log, "{line}")?;
    }
    println!(
        "wrote checkpoint {} ({} tensors) and log {}",
        out_path.display(),
        ckpt.tensors.len(),
        log_path.display()
    );
    Ok(())
}
