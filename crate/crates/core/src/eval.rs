//! Trajectory container, closed-form similarity alignment, and RMSE
//! evaluation. Monocular output is defined up to a global similarity, so the
//! error metric aligns (rotation, translation, scale) before measuring.

use crate::geom::{project_to_rotation, Pose, Rotation};
use crate::la::*;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("fewer than two associated pose pairs within the time tolerance")]
    NoOverlap,
    #[error("source positions have no spread, alignment undefined")]
    DegenerateGeometry,
}

/// Time-indexed sequence of absolute poses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory { samples: Vec::new() }
    }

    pub fn push(&mut self, timestamp: f64, pose: Pose) {
        self.samples.push((timestamp, pose));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|(_, p)| p.position()).collect()
    }
}

/// Similarity transform `p -> scale * R p + t`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity { scale: 1.0, rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) * self.scale + self.translation
    }
}

/// Least-squares similarity aligning `src` onto `dst` (closed form via the
/// cross-covariance SVD, determinant-corrected so the rotation is proper).
pub fn umeyama_alignment(src: &[Vec3], dst: &[Vec3]) -> Result<Similarity, EvalError> {
    let n = src.len().min(dst.len());
    if n < 2 {
        return Err(EvalError::NoOverlap);
    }
    let nf = n as f64;
    let mu_s: Vec3 = src.iter().take(n).sum::<Vec3>() / nf;
    let mu_d: Vec3 = dst.iter().take(n).sum::<Vec3>() / nf;
    let mut sigma = Mat3::zeros();
    let mut var_s = 0.0;
    for k in 0..n {
        let s = src[k] - mu_s;
        let d = dst[k] - mu_d;
        sigma += d * s.transpose();
        var_s += s.norm_squared();
    }
    sigma /= nf;
    var_s /= nf;
    if var_s < 1e-30 {
        return Err(EvalError::DegenerateGeometry);
    }
    let rotation = project_to_rotation(&sigma).map_err(|_| EvalError::DegenerateGeometry)?;
    // trace(D S) for scale: recompute via the aligned covariance
    let trace = (rotation.inverse().matrix() * sigma).trace();
    let scale = trace / var_s;
    let translation = mu_d - rotation.apply(&mu_s) * scale;
    Ok(Similarity { scale, rotation, translation })
}

#[derive(Debug, Clone, Copy)]
pub struct RmseReport {
    pub rmse: f64,
    pub alignment: Similarity,
    pub associated_pairs: usize,
}

/// Associates estimate and ground-truth samples by nearest timestamp within
/// `max_dt` seconds, aligns with a similarity, and reports the root mean
/// square position residual.
pub fn evaluate_rmse(estimate: &Trajectory, ground_truth: &Trajectory, max_dt: f64) -> Result<RmseReport, EvalError> {
    let mut est_pts = Vec::new();
    let mut gt_pts = Vec::new();
    for (t_e, pose_e) in &estimate.samples {
        let mut best: Option<(f64, &Pose)> = None;
        for (t_g, pose_g) in &ground_truth.samples {
            let dt = (t_e - t_g).abs();
            if dt <= max_dt && best.map_or(true, |(b, _)| dt < b) {
                best = Some((dt, pose_g));
            }
        }
        if let Some((_, pose_g)) = best {
            est_pts.push(pose_e.position());
            gt_pts.push(pose_g.position());
        }
    }
    if est_pts.len() < 2 {
        return Err(EvalError::NoOverlap);
    }
    let alignment = umeyama_alignment(&est_pts, &gt_pts)?;
    let mut sq = 0.0;
    for k in 0..est_pts.len() {
        sq += (alignment.apply(&est_pts[k]) - gt_pts[k]).norm_squared();
    }
    let rmse = (sq / est_pts.len() as f64).sqrt();
    Ok(RmseReport { rmse, alignment, associated_pairs: est_pts.len() })
}
