//! Pose-error metrics, recall, and the selection/refinement losses used as
//! diagnostics.

use crate::camera::{EulerPose, Intrinsics, PoseSE3};
use crate::error::{Error, Result};
use crate::geometry::WireframePoints;
use crate::volume::PoseVolume;

pub const DEFAULT_THRESHOLDS: [(f64, f64); 3] = [(2.0, 2.0), (3.0, 3.0), (5.0, 5.0)];
pub const DEFAULT_HUBER_DELTA_PX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Camera-center distance, meters.
    pub t_err: f64,
    /// Geodesic rotation angle, degrees.
    pub r_err: f64,
}

pub fn pose_error(est: &PoseSE3, gt: &PoseSE3) -> PoseError {
    let t_err = (est.center() - gt.center()).norm();
    let c = ((est.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0;
    PoseError {
        t_err,
        r_err: c.clamp(-1.0, 1.0).acos().to_degrees(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    /// `(meters, degrees)` pairs.
    pub thresholds: Vec<(f64, f64)>,
    /// Percentage of queries within each threshold (inclusive).
    pub recall: Vec<f64>,
    pub median_t: f64,
    pub median_r: f64,
    pub count: usize,
}

impl RecallReport {
    pub fn recall_at(&self, meters: f64, degrees: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&(m, d)| m == meters && d == degrees)
            .map(|i| self.recall[i])
    }

    /// `threshold_m,threshold_deg,recall_pct` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold_m,threshold_deg,recall_pct\n");
        for (&(m, d), r) in self.thresholds.iter().zip(&self.recall) {
            s.push_str(&format!("{m},{d},{r:.4}\n"));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("queries: {}\n", self.count);
        s.push_str(&format!("{:>10} {:>10}\n", "threshold", "recall %"));
        for (&(m, d), r) in self.thresholds.iter().zip(&self.recall) {
            s.push_str(&format!("{:>10} {:>10.2}\n", format!("{m}m/{d}°"), r));
        }
        s.push_str(&format!("median error: {:.4} m / {:.4}°\n", self.median_t, self.median_r));
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn recall(errors: &[PoseError], thresholds: &[(f64, f64)]) -> Result<RecallReport> {
    if errors.is_empty() {
        return Err(Error::EmptyErrors);
    }
    let n = errors.len() as f64;
    let recall = thresholds
        .iter()
        .map(|&(tm, td)| {
            let hits = errors.iter().filter(|e| e.t_err <= tm && e.r_err <= td).count();
            100.0 * hits as f64 / n
        })
        .collect();
    let ts: Vec<f64> = errors.iter().map(|e| e.t_err).collect();
    let rs: Vec<f64> = errors.iter().map(|e| e.r_err).collect();
    Ok(RecallReport {
        thresholds: thresholds.to_vec(),
        recall,
        median_t: median(&ts),
        median_r: median(&rs),
        count: errors.len(),
    })
}

/// `-ln P[b]` at the grid node nearest `gt`.
pub fn nll_diagnostic(volume: &PoseVolume, gt: &EulerPose) -> Result<f64> {
    if !volume.has_prob() {
        return Err(Error::invalid("probability volume not computed"));
    }
    let idx = volume.grid.nearest_index(gt);
    Ok(-volume.prob[volume.grid.flat_index(idx)].ln())
}

/// Huber kernel applied to a squared residual `s`.
pub fn huber(s: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    if s <= d2 {
        s
    } else {
        2.0 * delta * s.sqrt() - d2
    }
}

/// Robust sum of squared reprojection distances between two poses.
pub fn reproj_diagnostic(
    est: &PoseSE3,
    gt: &PoseSE3,
    points: &WireframePoints,
    k: &Intrinsics,
    huber_delta: f64,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::NoWireframePoints);
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for p in &points.points {
        let (a, b) = (est.transform(p), gt.transform(p));
        if !(a.z > 0.0 && b.z > 0.0) {
            continue;
        }
        let (ua, va) = k.pixel(&a);
        let (ub, vb) = k.pixel(&b);
        total += huber((ua - ub).powi(2) + (va - vb).powi(2), huber_delta);
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllPointsSkipped);
    }
    Ok(total)
}
