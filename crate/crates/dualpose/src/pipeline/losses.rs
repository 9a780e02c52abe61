//! Training losses: penalty-reduced focal loss on center maps, mean squared
//! error on joint heatmaps, and their weighted sum.

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};
use crate::{config_err, dim_err, numeric_err};

const CLAMP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LossReport {
    pub l_inst: f64,
    pub l_joint: f64,
    pub total: f64,
    pub alpha: f64,
}

/// Penalty-reduced focal loss between a predicted center map in (0,1) and
/// a Gaussian ground-truth map:
///
/// `-1/max(Np,1) * [ sum_{gt=1} (1-p)^2 log p
///                 + sum_{gt<1} (1-gt)^4 p^2 log(1-p) ]`
///
/// where `Np` counts ground-truth peak pixels.
pub fn focal_center_loss<S: Scalar>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<Tensor<S>> {
    if pred.shape() != gt.shape() {
        return Err(dim_err!("focal loss shapes differ: {:?} vs {:?}", pred.shape(), gt.shape()));
    }
    if pred.data().iter().any(|v| v.to_f64_lossy() < 0.0 || v.to_f64_lossy() > 1.0) {
        return Err(numeric_err!("focal loss expects predictions in (0,1)"));
    }

    let peak = 1.0 - CLAMP_MARGIN;
    let mut pos_mask = vec![S::zero(); gt.numel()];
    let mut neg_weight = vec![S::zero(); gt.numel()];
    let mut n_pos = 0usize;
    for (i, &g) in gt.data().iter().enumerate() {
        if g.to_f64_lossy() >= peak {
            pos_mask[i] = S::one();
            n_pos += 1;
        } else {
            let q = 1.0 - g.to_f64_lossy();
            neg_weight[i] = crate::tensor::scl(q * q * q * q);
        }
    }
    let pos_mask = Tensor::from_vec(gt.shape(), pos_mask)?;
    let neg_weight = Tensor::from_vec(gt.shape(), neg_weight)?;

    let p = pred.clamp(CLAMP_MARGIN, 1.0 - CLAMP_MARGIN)?;
    let one_minus_p = p.neg()?.add_scalar(1.0)?;
    let pos_term = pos_mask.mul(&one_minus_p.square()?)?.mul(&p.ln()?)?.sum_all()?;
    let neg_term = neg_weight.mul(&p.square()?)?.mul(&one_minus_p.ln()?)?.sum_all()?;
    pos_term.add(&neg_term)?.scale(-1.0 / n_pos.max(1) as f64)
}

/// Mean squared error over all heatmap elements; zero when the scene has
/// no instances (no joint supervision).
pub fn heatmap_mse_loss<S: Scalar>(
    pred: Option<&Tensor<S>>,
    gt: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    match (pred, gt) {
        (Some(p), Some(g)) => {
            if p.shape() != g.shape() {
                return Err(dim_err!("heatmap mse shapes differ: {:?} vs {:?}", p.shape(), g.shape()));
            }
            p.sub(g)?.square()?.mean_all()
        }
        (None, None) => Ok(Tensor::scalar(0.0)),
        _ => Err(dim_err!("heatmap mse: prediction and target presence disagree")),
    }
}

/// `total = l_inst + alpha * l_joint`, as a graph node plus a plain report.
pub fn total_loss<S: Scalar>(
    l_inst: &Tensor<S>,
    l_joint: &Tensor<S>,
    alpha: f64,
) -> Result<(Tensor<S>, LossReport)> {
    if alpha <= 0.0 {
        return Err(config_err!("loss weight alpha must be positive, got {alpha}"));
    }
    let total = l_inst.add(&l_joint.scale(alpha)?)?;
    let report = LossReport {
        l_inst: l_inst.scalar_f64()?,
        l_joint: l_joint.scalar_f64()?,
        total: total.scalar_f64()?,
        alpha,
    };
    Ok((total, report))
}
