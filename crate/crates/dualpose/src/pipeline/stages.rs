//! Encoder and the instance / joint feature decoders.

use super::{Model, SIGMA_MASK, STRIDE};
use crate::dim_err;
use crate::error::Result;
use crate::tensor::{scl, Scalar, Tensor};

/// Where instances come from: ground-truth centers during training,
/// detected center-map peaks at inference.
pub enum InstanceSource<'a> {
    /// Input-resolution `(x, y)` coordinates.
    Centers(&'a [(f64, f64)]),
    Detect { threshold: f64, max_instances: usize },
}

pub struct DecodedInstances<S: Scalar> {
    /// `[1,1,h,w]` sigmoid center map.
    pub center_pred: Tensor<S>,
    /// `[N,1,h,w]` constant Gaussian soft masks.
    pub masks: Option<Tensor<S>>,
    /// `[N,d,h,w]` per-instance appearance features.
    pub features: Option<Tensor<S>>,
    /// Feature-grid `(x, y)` per instance.
    pub centers_feat: Vec<(usize, usize)>,
}

impl<S: Scalar> Model<S> {
    /// Three conv+relu stages at strides 2, 2, 1: `[3,H,W] -> [1,c,H/4,W/4]`.
    pub fn encode(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        if image.shape().len() != 3 || image.shape()[0] != 3 {
            return Err(dim_err!("image must be [3,H,W], got {:?}", image.shape()));
        }
        let (h, w) = (image.shape()[1], image.shape()[2]);
        if h != self.dims.input_h || w != self.dims.input_w {
            return Err(crate::config_err!(
                "image {h}x{w} does not match configured input {}x{}",
                self.dims.input_h,
                self.dims.input_w
            ));
        }
        let x = image.reshape(&[1, 3, h, w])?;
        let x = self.encoder.conv1.forward(&x)?.relu()?;
        let x = self.encoder.conv2.forward(&x)?.relu()?;
        self.encoder.conv3.forward(&x)?.relu()
    }

    /// Center-map prediction plus per-instance soft masks and features.
    ///
    /// A detection pass that finds no peak above threshold yields a valid
    /// empty instance set.
    pub fn decode_instances(
        &self,
        f: &Tensor<S>,
        source: &InstanceSource<'_>,
    ) -> Result<DecodedInstances<S>> {
        let (h, w) = (self.dims.feat_h(), self.dims.feat_w());
        let center_pred = self
            .inst_head
            .center_conv2
            .forward(&self.inst_head.center_conv1.forward(f)?.relu()?)?
            .sigmoid()?;

        let centers_feat: Vec<(usize, usize)> = match source {
            InstanceSource::Centers(input_coords) => input_coords
                .iter()
                .map(|&(x, y)| {
                    let fx = ((x / STRIDE as f64).round() as usize).min(w - 1);
                    let fy = ((y / STRIDE as f64).round() as usize).min(h - 1);
                    (fx, fy)
                })
                .collect(),
            InstanceSource::Detect { threshold, max_instances } => {
                detect_peaks(center_pred.data(), h, w, *threshold, *max_instances)
            }
        };
        if centers_feat.is_empty() {
            return Ok(DecodedInstances { center_pred, masks: None, features: None, centers_feat });
        }

        let n = centers_feat.len();
        let mut mask_data = Vec::with_capacity(n * h * w);
        for &(cx, cy) in &centers_feat {
            render_gaussian_into(&mut mask_data, cx as f64, cy as f64, SIGMA_MASK, h, w);
        }
        let masks = Tensor::from_vec(&[n, 1, h, w], mask_data)?;

        let f_rep = Tensor::concat(&vec![f.clone(); n], 0)?;
        let masked = f_rep.mul(&masks)?;
        let features = self.inst_head.embed.forward(&masked)?;
        Ok(DecodedInstances { center_pred, masks: Some(masks), features: Some(features), centers_feat })
    }

    /// Shared two-conv head over the visual features concatenated with each
    /// instance's own features: `[N,c+d,h,w] -> [N,K,h,w]`.
    pub fn decode_joints(&self, f: &Tensor<S>, f_inst: &Tensor<S>) -> Result<Tensor<S>> {
        let n = f_inst.shape()[0];
        let f_rep = Tensor::concat(&vec![f.clone(); n], 0)?;
        let x = Tensor::concat_channels(&[f_rep, f_inst.clone()])?;
        let x = self.joint_head.conv1.forward(&x)?.relu()?;
        self.joint_head.conv2.forward(&x)
    }
}

/// Unnormalized Gaussian (peak exactly 1 at the center pixel) appended row
/// by row; shared by masks and rendered targets.
pub fn render_gaussian_into<S: Scalar>(
    out: &mut Vec<S>,
    cx: f64,
    cy: f64,
    sigma: f64,
    h: usize,
    w: usize,
) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            out.push(scl((-((dx * dx + dy * dy) * inv)).exp()));
        }
    }
}

/// Greedy center-map peak picking: local maxima over the 8-neighborhood at
/// or above `threshold`, strongest first (row-major on ties), suppressing
/// anything within Chebyshev distance 1 of an accepted peak.
fn detect_peaks<S: Scalar>(
    map: &[S],
    h: usize,
    w: usize,
    threshold: f64,
    max_instances: usize,
) -> Vec<(usize, usize)> {
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            f64::NEG_INFINITY
        } else {
            map[y as usize * w + x as usize].to_f64_lossy()
        }
    };
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = at(x as i64, y as i64);
            if v < threshold {
                continue;
            }
            let mut is_peak = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy) != (0, 0) && at(x as i64 + dx, y as i64 + dy) > v {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                candidates.push((v, y, x));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, y, x) in candidates {
        if kept.len() >= max_instances {
            break;
        }
        let close = kept
            .iter()
            .any(|&(kx, ky)| kx.abs_diff(x) <= 1 && ky.abs_diff(y) <= 1);
        if !close {
            kept.push((x, y));
        }
    }
    kept
}
