//! Attention dumping: CSV matrices, raw logits, and PGM renderings per
//! branch, plus a manifest of everything written.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::pipeline::{forward_full, ForwardMode, PEAK_THRESHOLD};
use crate::relnet::{AttentionBundle, InstanceAttention, JointAttention};
use crate::synth::generate_scene;
use crate::tensor::{Scalar, Tensor};

fn write_csv<S: Scalar>(path: &Path, data: &[S], rows: usize, cols: usize) -> Result<()> {
    let mut out = String::new();
    for r in 0..rows {
        let row: Vec<String> =
            data[r * cols..(r + 1) * cols].iter().map(|v| v.to_f64_lossy().to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// 8-bit binary PGM: values in [0,1] scaled to 0..=255, matrix rows as
/// scanlines.
fn write_pgm<S: Scalar>(path: &Path, data: &[S], rows: usize, cols: usize) -> Result<()> {
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for v in data {
        let scaled = (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8;
        bytes.push(scaled);
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn dump_instance<S: Scalar>(
    dir: &Path,
    branch: &str,
    att: &InstanceAttention<S>,
    manifest: &mut Vec<String>,
) -> Result<()> {
    let n = att.weights.shape()[0];
    let base = format!("inst_{branch}");
    write_csv(&dir.join(format!("{base}.csv")), att.weights.data(), n, n)?;
    write_csv(&dir.join(format!("{base}_logits.csv")), att.logits.data(), n, n)?;
    write_pgm(&dir.join(format!("{base}.pgm")), att.weights.data(), n, n)?;
    manifest.push(format!("{base}.csv"));
    manifest.push(format!("{base}_logits.csv"));
    manifest.push(format!("{base}.pgm"));
    Ok(())
}

fn dump_joint<S: Scalar>(
    dir: &Path,
    branch: &str,
    att: &JointAttention<S>,
    manifest: &mut Vec<String>,
) -> Result<()> {
    let (n, k) = (att.weights.shape()[0], att.weights.shape()[1]);
    for i in 0..n {
        let slice = &att.weights.data()[i * k * k..(i + 1) * k * k];
        let logits = &att.logits.data()[i * k * k..(i + 1) * k * k];
        let base = format!("joint_{branch}_{i}");
        write_csv(&dir.join(format!("{base}.csv")), slice, k, k)?;
        write_csv(&dir.join(format!("{base}_logits.csv")), logits, k, k)?;
        write_pgm(&dir.join(format!("{base}.pgm")), slice, k, k)?;
        manifest.push(format!("{base}.csv"));
        manifest.push(format!("{base}_logits.csv"));
        manifest.push(format!("{base}.pgm"));
    }
    Ok(())
}

pub fn dump_bundle<S: Scalar>(dir: &Path, bundle: &AttentionBundle<S>) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    if let Some(att) = &bundle.ijr_instance {
        dump_instance(dir, "ijr", att, &mut manifest)?;
    }
    if let Some(att) = &bundle.ijr_joint {
        dump_joint(dir, "ijr", att, &mut manifest)?;
    }
    if let Some(att) = &bundle.jir_instance {
        dump_instance(dir, "jir", att, &mut manifest)?;
    }
    if let Some(att) = &bundle.jir_joint {
        dump_joint(dir, "jir", att, &mut manifest)?;
    }
    let mut file = std::fs::File::create(dir.join("manifest.txt"))?;
    for line in &manifest {
        writeln!(file, "{line}")?;
    }
    Ok(manifest)
}

/// `dump-attn --ckpt <path> --scene-seed S --out <dir>`: run detection-mode
/// inference on the seeded scene and dump every attention matrix produced
/// by the checkpoint's branch configuration. An empty detection writes an
/// empty manifest and succeeds.
pub fn cmd_dump_attn(
    ckpt_path: &Path,
    scene_seed: u64,
    out_dir: &PathBuf,
    seed_override: Option<u64>,
) -> Result<()> {
    let ckpt = crate::checkpoint::load_checkpoint(ckpt_path)?;
    let mut config = ckpt.config()?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let model = ckpt.to_model()?;
    let scene = generate_scene(scene_seed, &config.scene_config())?;
    let image: Tensor<f32> = scene.image_tensor()?;
    let mode = ForwardMode::Infer { peak_threshold: PEAK_THRESHOLD, max_instances: config.n_max };
    let out = forward_full(&model, &image, &mode, &config.branch_config())?;
    let manifest = dump_bundle(out_dir, &out.attention)?;
    println!(
        "scene {scene_seed}: {} instances detected, {} files written to {}",
        out.instance_centers.len(),
        manifest.len(),
        out_dir.display()
    );
    Ok(())
}
