//! Deterministic synthetic multi-person scenes: stick figures with
//! per-instance colors, occlusion-forcing placement, Gaussian target
//! rendering and a PCK evaluator.

mod pck;
mod render;
#[cfg(test)]
mod tests;

pub use pck::{pck_evaluate, MetricReport, PckAccumulator};
pub use render::{render_image, render_targets};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numeric_err;
use crate::pipeline::STRIDE;
use crate::tensor::{Scalar, Tensor};

/// Canonical joint offsets (unit scale, bounded in [-1,1]^2) plus limb
/// connectivity. Joint 0 is the hub; limbs form a star, hence acyclic.
#[derive(Debug, Clone)]
pub struct SkeletonTemplate {
    pub offsets: Vec<(f64, f64)>,
    pub limbs: Vec<(usize, usize)>,
}

impl SkeletonTemplate {
    /// The default 5-joint figure: head up, two hands, two feet. Other
    /// joint counts spread the extremities on a ring around the hub.
    pub fn star(joints: usize) -> Self {
        let offsets: Vec<(f64, f64)> = if joints == 5 {
            vec![(0.0, -1.0), (-0.85, -0.25), (0.85, -0.25), (-0.55, 0.9), (0.55, 0.9)]
        } else {
            (0..joints)
                .map(|k| {
                    if k == 0 {
                        (0.0, -1.0)
                    } else {
                        let angle = 2.0 * std::f64::consts::PI * k as f64 / joints as f64
                            - std::f64::consts::FRAC_PI_2;
                        (0.85 * angle.cos(), 0.85 * angle.sin())
                    }
                })
                .collect()
        };
        let limbs = (1..joints).map(|k| (0, k)).collect();
        SkeletonTemplate { offsets, limbs }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SceneConfig {
    pub n_max: usize,
    pub height: usize,
    pub width: usize,
    /// Probability that a two-or-more-person scene forces a >= 30% box
    /// overlap between the first two figures.
    pub overlap_prob: f64,
    pub joints: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { n_max: 4, height: 64, width: 64, overlap_prob: 0.5, joints: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Person {
    /// Input-resolution center, snapped to the feature grid.
    pub center: (f64, f64),
    /// Figure half-extent in pixels.
    pub scale: f64,
    pub rotation: f64,
    /// Input-resolution joints, snapped to the feature grid.
    pub joints: Vec<(f64, f64)>,
}

impl Person {
    /// Diagonal of the joint bounding box, floored at one feature cell;
    /// the size reference for PCK radii.
    pub fn extent(&self) -> f64 {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.joints {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(STRIDE as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// `[3,H,W]` pixel data, row-major, values in [0,1].
    pub image: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub persons: Vec<Person>,
    pub seed: u64,
}

impl Scene {
    pub fn image_tensor<S: Scalar>(&self) -> Result<Tensor<S>> {
        Tensor::from_f64s(&[3, self.height, self.width], &self.image)
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.persons.iter().map(|p| p.center).collect()
    }
}

fn snap(v: f64, cells: usize) -> f64 {
    let cell = (v / STRIDE as f64).round().clamp(0.0, cells as f64 - 1.0);
    cell * STRIDE as f64
}

fn bbox(person: &Person) -> (f64, f64, f64, f64) {
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &person.joints {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (x0, y0, x1, y1)
}

fn overlap_fraction(a: &Person, b: &Person) -> f64 {
    let (ax0, ay0, ax1, ay1) = bbox(a);
    let (bx0, by0, bx1, by1) = bbox(b);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let area_a = ((ax1 - ax0) * (ay1 - ay0)).max(1.0);
    let area_b = ((bx1 - bx0) * (by1 - by0)).max(1.0);
    inter / area_a.min(area_b)
}

fn place_person(
    rng: &mut ChaCha8Rng,
    config: &SceneConfig,
    template: &SkeletonTemplate,
) -> Person {
    let min_side = config.height.min(config.width) as f64;
    let scale = rng.gen_range(0.16 * min_side..0.34 * min_side);
    let rotation: f64 = rng.gen_range(-0.5..0.5);
    let margin = (scale * 1.1 + 2.0).min(min_side / 2.0 - 1.0);
    let cx = rng.gen_range(margin..config.width as f64 - 1.0 - margin);
    let cy = rng.gen_range(margin..config.height as f64 - 1.0 - margin);

    let (w_cells, h_cells) = (config.width / STRIDE, config.height / STRIDE);
    let center = (snap(cx, w_cells), snap(cy, h_cells));
    let (sin, cos) = (rotation.sin(), rotation.cos());
    let joints = template
        .offsets
        .iter()
        .map(|&(ox, oy)| {
            let rx = ox * cos - oy * sin;
            let ry = ox * sin + oy * cos;
            (snap(center.0 + scale * rx, w_cells), snap(center.1 + scale * ry, h_cells))
        })
        .collect();
    Person { center, scale, rotation, joints }
}

/// Minimum center separation in pixels, so center-map peaks stay distinct.
const MIN_CENTER_DIST: f64 = 2.0 * STRIDE as f64;

fn try_generate(rng: &mut ChaCha8Rng, config: &SceneConfig, n: usize) -> Option<Vec<Person>> {
    let template = SkeletonTemplate::star(config.joints);
    let force_overlap = n >= 2 && rng.gen_bool(config.overlap_prob);
    let mut persons: Vec<Person> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..100 {
            let cand = place_person(rng, config, &template);
            let min_dist = persons
                .iter()
                .map(|p| {
                    ((p.center.0 - cand.center.0).powi(2) + (p.center.1 - cand.center.1).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if min_dist < MIN_CENTER_DIST {
                continue;
            }
            if i == 1 && force_overlap && overlap_fraction(&persons[0], &cand) < 0.3 {
                continue;
            }
            persons.push(cand);
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }
    Some(persons)
}

/// Deterministic scene from a seed: N uniform in [1, n_max], scaled and
/// rotated star figures (occlusion forced with `overlap_prob`), rendered as
/// anti-aliased colored limbs and joint blobs plus additive noise.
///
/// All coordinates snap to the feature grid so heatmap argmax decoding is
/// lossless. Placement retries once on a derived sub-seed before erroring.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<Scene> {
    if config.n_max == 0 || config.n_max > 6 {
        return Err(crate::config_err!("n_max must be in 1..=6, got {}", config.n_max));
    }
    if config.height % STRIDE != 0 || config.width % STRIDE != 0 {
        return Err(crate::config_err!(
            "scene size {}x{} must be divisible by {STRIDE}",
            config.height,
            config.width
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=config.n_max);
    let persons = match try_generate(&mut rng, config, n) {
        Some(p) => p,
        None => {
            let mut retry = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
            try_generate(&mut retry, config, n)
                .ok_or_else(|| numeric_err!("scene {seed}: placement unsatisfiable after retries"))?
        }
    };
    let image = render_image(&persons, config, &mut rng);
    Ok(Scene { image, height: config.height, width: config.width, persons, seed })
}
