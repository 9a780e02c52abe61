//! Image and target rendering.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Person, Scene, SceneConfig};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// One distinct color per instance index (N never exceeds 6).
const PALETTE: [[f64; 3]; 6] = [
    [0.95, 0.25, 0.20],
    [0.20, 0.85, 0.30],
    [0.25, 0.40, 0.95],
    [0.95, 0.85, 0.20],
    [0.90, 0.25, 0.90],
    [0.20, 0.85, 0.90],
];

const LIMB_HALF_WIDTH: f64 = 1.5;
const BLOB_RADIUS: f64 = 2.2;
const NOISE_SIGMA: f64 = 0.05;

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * vx + (py - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Anti-aliased coverage of one figure at a pixel, in [0,1].
fn coverage(person: &Person, limbs: &[(usize, usize)], px: f64, py: f64) -> f64 {
    let mut c: f64 = 0.0;
    for &(a, b) in limbs {
        let d = segment_distance(px, py, person.joints[a], person.joints[b]);
        c = c.max((LIMB_HALF_WIDTH - d + 0.5).clamp(0.0, 1.0));
    }
    for &(jx, jy) in &person.joints {
        let d = ((px - jx).powi(2) + (py - jy).powi(2)).sqrt();
        c = c.max((BLOB_RADIUS - d + 0.5).clamp(0.0, 1.0));
    }
    c
}

/// Box-Muller standard normal draw.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Paint figures in index order (later figures occlude earlier ones), then
/// add clamped Gaussian pixel noise. Returns `[3,H,W]` data in [0,1].
pub fn render_image(persons: &[Person], config: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (h, w) = (config.height, config.width);
    let limbs = super::SkeletonTemplate::star(config.joints).limbs;
    let mut img = vec![0.0f64; 3 * h * w];
    for (idx, person) in persons.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        // Restrict painting to the figure's padded bounding box.
        let (bx0, by0, bx1, by1) = super::bbox(person);
        let pad = BLOB_RADIUS + 1.5;
        let x0 = (bx0 - pad).floor().max(0.0) as usize;
        let y0 = (by0 - pad).floor().max(0.0) as usize;
        let x1 = ((bx1 + pad).ceil() as usize).min(w - 1);
        let y1 = ((by1 + pad).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = coverage(person, &limbs, x as f64, y as f64);
                if c > 0.0 {
                    for (ch, &col) in color.iter().enumerate() {
                        let p = &mut img[ch * h * w + y * w + x];
                        *p = col * c + *p * (1.0 - c);
                    }
                }
            }
        }
    }
    for p in &mut img {
        *p = (*p + NOISE_SIGMA * normal(rng)).clamp(0.0, 1.0);
    }
    img
}

/// Ground-truth center map `[1,1,h,w]` and joint heatmaps `[N,K,h,w]` at
/// the feature resolution: unnormalized Gaussians with peak 1 at the
/// stride-scaled coordinates, overlapping sources combined by max.
pub fn render_targets<S: Scalar>(
    scene: &Scene,
    sigma_t: f64,
    stride: usize,
) -> Result<(Tensor<S>, Option<Tensor<S>>)> {
    if scene.height % stride != 0 || scene.width % stride != 0 {
        return Err(crate::config_err!(
            "stride {stride} does not divide scene {}x{}",
            scene.height,
            scene.width
        ));
    }
    let (h, w) = (scene.height / stride, scene.width / stride);
    let mut center = vec![0.0f64; h * w];
    for p in &scene.persons {
        max_blend_gaussian(&mut center, p.center.0 / stride as f64, p.center.1 / stride as f64, sigma_t, h, w);
    }
    let center_map = Tensor::from_f64s(&[1, 1, h, w], &center)?;

    if scene.persons.is_empty() {
        return Ok((center_map, None));
    }
    let k = scene.persons[0].joints.len();
    let n = scene.persons.len();
    let mut maps = vec![0.0f64; n * k * h * w];
    for (ni, p) in scene.persons.iter().enumerate() {
        for (ki, &(jx, jy)) in p.joints.iter().enumerate() {
            let slice = &mut maps[(ni * k + ki) * h * w..(ni * k + ki + 1) * h * w];
            max_blend_gaussian(slice, jx / stride as f64, jy / stride as f64, sigma_t, h, w);
        }
    }
    let heatmaps = Tensor::from_f64s(&[n, k, h, w], &maps)?;
    Ok((center_map, Some(heatmaps)))
}

/// Max-composite an unnormalized Gaussian, truncated at a 4-sigma window
/// so sourceless regions stay exactly zero.
fn max_blend_gaussian(map: &mut [f64], cx: f64, cy: f64, sigma: f64, h: usize, w: usize) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let radius = 4.0 * sigma;
    let y0 = ((cy - radius).floor().max(0.0)) as usize;
    let y1 = ((cy + radius).ceil() as usize).min(h - 1);
    let x0 = ((cx - radius).floor().max(0.0)) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let v = (-((dx * dx + dy * dy) * inv)).exp();
            let p = &mut map[y * w + x];
            if v > *p {
                *p = v;
            }
        }
    }
}
