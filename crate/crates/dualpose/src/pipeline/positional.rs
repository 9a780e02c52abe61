//! Sinusoidal positional embeddings from center-map maxima coordinates.

use crate::config_err;
use crate::error::Result;
use crate::tensor::{scl, Scalar, Tensor};

/// First row-major argmax of a `h x w` map, as `(x, y)`.
pub fn argmax_coord<S: Scalar>(map: &[S], h: usize, w: usize) -> (usize, usize) {
    debug_assert_eq!(map.len(), h * w);
    let mut best = map[0];
    let mut best_idx = 0usize;
    for (i, &v) in map.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    (best_idx % w, best_idx / w)
}

/// One embedding row per instance from its feature-grid center coordinate.
///
/// Coordinates are normalized by the map extents; each one feeds a
/// geometric frequency ladder (base pi, doubling per step) whose phases are
/// emitted as interleaved sin/cos pairs. The x coordinate takes the first
/// half of the pairs (one extra when d/2 is odd), y the rest; with d
/// divisible by 4 that is d/4 frequencies each.
pub fn positional_embedding<S: Scalar>(
    centers_feat: &[(usize, usize)],
    (h, w): (usize, usize),
    d: usize,
) -> Result<Tensor<S>> {
    if d % 2 != 0 {
        return Err(config_err!("positional embedding width d = {d} must be even"));
    }
    if centers_feat.is_empty() {
        return Err(config_err!("positional embedding needs at least one instance"));
    }
    let pairs = d / 2;
    let x_pairs = pairs - pairs / 2;
    let mut data = Vec::with_capacity(centers_feat.len() * d);
    for &(cx, cy) in centers_feat {
        let xn = cx as f64 / w as f64;
        let yn = cy as f64 / h as f64;
        for p in 0..pairs {
            let (coord, idx) = if p < x_pairs { (xn, p) } else { (yn, p - x_pairs) };
            let omega = std::f64::consts::PI * (1u64 << idx) as f64;
            let phase = coord * omega;
            data.push(scl(phase.sin()));
            data.push(scl(phase.cos()));
        }
    }
    Tensor::from_vec(&[centers_feat.len(), d], data)
}
