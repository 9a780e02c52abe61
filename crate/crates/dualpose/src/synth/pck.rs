//! PCK: fraction of predicted joints within a radius of their ground truth,
//! after greedy one-to-one instance matching on center distance.

use super::Scene;
use crate::error::Result;
use crate::numeric_err;

#[derive(Debug, Clone)]
pub struct MetricReport {
    /// hits / (N_gt * K) over matched instances (unmatched ground truth
    /// counts as all misses).
    pub pck: f64,
    /// Hits per joint slot, length K.
    pub per_joint_hits: Vec<usize>,
    /// Ground-truth joints per slot, length K.
    pub per_joint_total: Vec<usize>,
    /// Radius fraction of the per-person extent.
    pub r_frac: f64,
}

/// Aggregates per-scene reports into one summary.
#[derive(Debug, Clone, Default)]
pub struct PckAccumulator {
    hits: Vec<usize>,
    totals: Vec<usize>,
    r_frac: f64,
}

impl PckAccumulator {
    pub fn add(&mut self, report: &MetricReport) {
        if self.hits.len() < report.per_joint_hits.len() {
            self.hits.resize(report.per_joint_hits.len(), 0);
            self.totals.resize(report.per_joint_total.len(), 0);
        }
        for (h, &x) in self.hits.iter_mut().zip(&report.per_joint_hits) {
            *h += x;
        }
        for (t, &x) in self.totals.iter_mut().zip(&report.per_joint_total) {
            *t += x;
        }
        self.r_frac = report.r_frac;
    }

    pub fn finish(&self) -> MetricReport {
        let total: usize = self.totals.iter().sum();
        let hits: usize = self.hits.iter().sum();
        MetricReport {
            pck: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            per_joint_hits: self.hits.clone(),
            per_joint_total: self.totals.clone(),
            r_frac: self.r_frac,
        }
    }
}

fn centroid(joints: &[(f64, f64)]) -> (f64, f64) {
    let n = joints.len().max(1) as f64;
    let (sx, sy) = joints.iter().fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x, ay + y));
    (sx / n, sy / n)
}

/// Greedy nearest-center matching (one-to-one, sorted globally by distance)
/// then per-joint radius checks at `r_frac` of the person's extent.
///
/// Sorting keys never involve prediction order, so the metric is invariant
/// to permutations of the prediction list.
pub fn pck_evaluate(
    pred_joints: &[Vec<(f64, f64)>],
    scene: &Scene,
    r_frac: f64,
) -> Result<MetricReport> {
    if scene.persons.is_empty() {
        return Err(numeric_err!("pck is undefined for scenes with no ground-truth instances"));
    }
    let k = scene.persons[0].joints.len();

    let pred_centers: Vec<(f64, f64)> = pred_joints.iter().map(|j| centroid(j)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, &(px, py)) in pred_centers.iter().enumerate() {
        for (gi, person) in scene.persons.iter().enumerate() {
            let dist = ((px - person.center.0).powi(2) + (py - person.center.1).powi(2)).sqrt();
            pairs.push((dist, gi, pi));
        }
    }
    // Tie-break on ground-truth index then predicted center coordinates.
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(
                pred_centers[a.2]
                    .partial_cmp(&pred_centers[b.2])
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    let mut gt_match: Vec<Option<usize>> = vec![None; scene.persons.len()];
    let mut pred_used = vec![false; pred_joints.len()];
    for &(_, gi, pi) in &pairs {
        if gt_match[gi].is_none() && !pred_used[pi] {
            gt_match[gi] = Some(pi);
            pred_used[pi] = true;
        }
    }

    let mut per_joint_hits = vec![0usize; k];
    let mut per_joint_total = vec![0usize; k];
    for (gi, person) in scene.persons.iter().enumerate() {
        let radius = r_frac * person.extent();
        for (ki, &(gx, gy)) in person.joints.iter().enumerate() {
            per_joint_total[ki] += 1;
            if let Some(pi) = gt_match[gi] {
                if let Some(&(px, py)) = pred_joints[pi].get(ki) {
                    let dist = ((px - gx).powi(2) + (py - gy).powi(2)).sqrt();
                    if dist <= radius {
                        per_joint_hits[ki] += 1;
                    }
                }
            }
        }
    }
    let total: usize = per_joint_total.iter().sum();
    let hits: usize = per_joint_hits.iter().sum();
    Ok(MetricReport {
        pck: hits as f64 / total as f64,
        per_joint_hits,
        per_joint_total,
        r_frac,
    })
}
