//! Absolute translation recovery with rotations held fixed: per-edge scale
//! parameters from the unit-baseline cross-product constraint, a stacked
//! linear system over covisible pairs of pairs, and an l1 objective on the
//! unit sphere minimized by ADMM.
//!
//! The solved vector stacks camera positions; the result is gauge-free
//! (defined up to a global shift and scale) and gets anchored by the caller.
//! No scene-point positions enter the system anywhere.

use crate::geom::{skew, Rotation};
use crate::la::*;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TransAvgError {
    #[error("rotated directions are parallel, pair scales undefined")]
    ParallelDirections,
    #[error("pair scale solution is non-positive or unbounded")]
    DegenerateScale,
    #[error("constraint matrix rank {rank} below required {required}")]
    InsufficientConstraints { rank: usize, required: usize },
    #[error("edge references a frame missing from the solve set")]
    UnknownFrame,
}

/// Per-camera scale parameters of one pair under the unit-baseline
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePair {
    pub s_i: f64,
    pub s_j: f64,
}

/// Solves the cross-product constraint
/// `(R_i d x (-R_j) d) x [(t_i - t_j) + (1/s_i) R_i d + (1/s_j) R_j d] = 0`
/// for `(s_i, s_j)` assuming a unit baseline `||t_i - t_j|| = 1`.
///
/// With `a = R_i d`, `b = R_j d` and the unit baseline `u = -R_i^T d`, the
/// bracket is parallel to `a x b` exactly when the a- and b-components of `u`
/// are cancelled, which pins both scales. Substituting back therefore zeroes
/// the left side identically.
pub fn solve_pair_scales(r_i: &Rotation, r_j: &Rotation, dir: &Vec3) -> Result<ScalePair, TransAvgError> {
    let a = r_i.apply(dir);
    let b = r_j.apply(dir);
    let cross = a.cross(&b);
    if cross.norm() < 1e-10 {
        return Err(TransAvgError::ParallelDirections);
    }
    let c_hat = cross.normalize();
    let u = -(r_i.inverse().apply(dir));
    let basis = Mat3::from_columns(&[a, b, c_hat]);
    let coeffs = basis.lu().solve(&u).ok_or(TransAvgError::ParallelDirections)?;
    let (alpha, beta) = (coeffs[0], coeffs[1]);
    if alpha.abs() < 1e-12 || beta.abs() < 1e-12 {
        return Err(TransAvgError::DegenerateScale);
    }
    let s = ScalePair { s_i: -1.0 / alpha, s_j: -1.0 / beta };
    if s.s_i <= 0.0 || s.s_j <= 0.0 {
        return Err(TransAvgError::DegenerateScale);
    }
    Ok(s)
}

/// Residual of the pair-scale constraint for a candidate solution; the
/// substitute-back oracle for [`solve_pair_scales`].
pub fn pair_scale_residual(r_i: &Rotation, r_j: &Rotation, dir: &Vec3, scales: &ScalePair) -> f64 {
    let a = r_i.apply(dir);
    let b = r_j.apply(dir);
    let u = -(r_i.inverse().apply(dir));
    let bracket = u + a / scales.s_i + b / scales.s_j;
    a.cross(&(-b)).cross(&bracket).norm()
}

/// One relative-direction measurement between frames i and j, with the frozen
/// coefficient blocks `A_i = (s_i R_i)^{-1}`, `A_j = (s_j R_j)^{-1}` (baseline
/// norm fixed to 1 by the pair-scale normalization). Scale-free pairs (where
/// the scale solve is degenerate) carry unit scales.
#[derive(Debug, Clone)]
pub struct PairConstraint {
    pub i: usize,
    pub j: usize,
    /// Unit relative translation direction in the camera-i frame.
    pub direction: Vec3,
    pub a_i: Mat3,
    pub a_j: Mat3,
    pub scale_free: bool,
}

impl PairConstraint {
    /// Builds the constraint for an edge, falling back to unit scales when the
    /// pair-scale solve is degenerate (parallel rotated directions).
    pub fn from_edge(i: usize, j: usize, r_i: &Rotation, r_j: &Rotation, direction: Vec3) -> Self {
        match solve_pair_scales(r_i, r_j, &direction) {
            Ok(s) => PairConstraint {
                i,
                j,
                direction,
                a_i: r_i.inverse().matrix() / s.s_i,
                a_j: r_j.inverse().matrix() / s.s_j,
                scale_free: false,
            },
            Err(_) => PairConstraint {
                i,
                j,
                direction,
                a_i: *r_i.inverse().matrix(),
                a_j: *r_j.inverse().matrix(),
                scale_free: true,
            },
        }
    }

    pub fn scale_i(&self) -> f64 {
        3f64.sqrt() / self.a_i.norm()
    }

    pub fn scale_j(&self) -> f64 {
        3f64.sqrt() / self.a_j.norm()
    }

    /// Unit baseline direction in world coordinates, `R_i^T d`.
    pub fn world_direction(&self) -> Vec3 {
        (self.a_i * self.direction * self.scale_i()).normalize()
    }

    /// Inverse-scale weight of this edge's rows.
    pub fn weight(&self) -> f64 {
        if self.scale_free {
            1.0
        } else {
            0.5 * (1.0 / self.scale_i() + 1.0 / self.scale_j())
        }
    }
}

/// All pairs of constraints sharing a frame, in deterministic order. These
/// are the covisible pair-of-pairs whose expressions are equated.
pub fn covisibility_pairs(pairs: &[PairConstraint]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for e in 0..pairs.len() {
        for f in e + 1..pairs.len() {
            let (pe, pf) = (&pairs[e], &pairs[f]);
            if pe.i == pf.i || pe.i == pf.j || pe.j == pf.i || pe.j == pf.j {
                out.push((e, f));
            }
        }
    }
    out
}

/// One 3-row block of the stacked system, touching at most four columns.
#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub cols: [usize; 4],
    pub mats: [Mat3; 4],
}

/// Sparse stacked coefficient matrix over 3m position unknowns.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    pub ncols: usize,
    pub blocks: Vec<ConstraintBlock>,
}

impl ConstraintMatrix {
    pub fn nrows(&self) -> usize {
        3 * self.blocks.len()
    }

    pub fn matvec(&self, x: &DVec) -> DVec {
        let mut y = DVec::zeros(self.nrows());
        for (bi, block) in self.blocks.iter().enumerate() {
            let mut acc = Vec3::zeros();
            for k in 0..4 {
                let c = block.cols[k];
                acc += block.mats[k] * Vec3::new(x[3 * c], x[3 * c + 1], x[3 * c + 2]);
            }
            for r in 0..3 {
                y[3 * bi + r] = acc[r];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMat {
        let mut a = DMat::zeros(self.nrows(), self.ncols);
        for (bi, block) in self.blocks.iter().enumerate() {
            for k in 0..4 {
                let c = block.cols[k];
                for r in 0..3 {
                    for s in 0..3 {
                        a[(3 * bi + r, 3 * c + s)] += block.mats[k][(r, s)];
                    }
                }
            }
        }
        a
    }
}

/// Stacks one 3-row block per covisible pair-of-pairs: the scale-weighted
/// baseline-parallelism expression of one edge minus the other's. Every block
/// annihilates uniform translation shifts by construction, the ground-truth
/// configuration lies in the nullspace, and each block touches only the
/// columns of its four frames.
pub fn build_constraint_matrix(
    pairs: &[PairConstraint],
    covis: &[(usize, usize)],
    frame_index: &BTreeMap<usize, usize>,
) -> Result<ConstraintMatrix, TransAvgError> {
    let m = frame_index.len();
    let mut blocks = Vec::with_capacity(covis.len());
    for &(e, f) in covis {
        let pe = &pairs[e];
        let pf = &pairs[f];
        let we = skew(&pe.world_direction()) * pe.weight();
        let wf = skew(&pf.world_direction()) * pf.weight();
        let col = |id: usize| frame_index.get(&id).copied().ok_or(TransAvgError::UnknownFrame);
        blocks.push(ConstraintBlock {
            cols: [col(pe.i)?, col(pe.j)?, col(pf.i)?, col(pf.j)?],
            mats: [-we, we, wf, -wf],
        });
    }
    let a = ConstraintMatrix { ncols: 3 * m, blocks };
    let required = (3usize * m).saturating_sub(4);
    let rank = numerical_rank(&a.to_dense());
    if rank < required {
        return Err(TransAvgError::InsufficientConstraints { rank, required });
    }
    Ok(a)
}

fn numerical_rank(a: &DMat) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let tol = sv.iter().cloned().fold(0.0, f64::max) * 1e-10 * (a.nrows().max(a.ncols()) as f64);
    sv.iter().filter(|&&s| s > tol).count()
}

/// The translation system of one window: the stacked matrix and relaxation
/// parameter; slack, multiplier and iterate live in [`AdmmOutcome`].
#[derive(Debug, Clone)]
pub struct TranslationSystem {
    pub a: ConstraintMatrix,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmParams {
    pub beta: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub max_iters: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams { beta: 1.0, primal_tol: 1e-8, dual_tol: 1e-8, max_iters: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub x: DVec,
    pub e: DVec,
    pub lambda: DVec,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub objective: f64,
}

fn soft_threshold(v: &DVec, t: f64) -> DVec {
    v.map(|z| {
        if z > t {
            z - t
        } else if z < -t {
            z + t
        } else {
            0.0
        }
    })
}

fn amax_or_zero(v: &DVec) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Thin SVD pseudo-inverse applicator.
struct Pinv {
    u: DMat,
    v: DMat,
    inv_s: DVec,
}

impl Pinv {
    fn new(a: &DMat) -> Pinv {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Pinv { u: DMat::zeros(a.nrows(), 0), v: DMat::zeros(a.ncols(), 0), inv_s: DVec::zeros(0) };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let sv = svd.singular_values;
        let tol = sv.iter().cloned().fold(0.0, f64::max) * 1e-12 * (a.nrows().max(a.ncols()) as f64);
        let inv_s = DVec::from_iterator(sv.len(), sv.iter().map(|&s| if s > tol { 1.0 / s } else { 0.0 }));
        Pinv { u, v: v_t.transpose(), inv_s }
    }

    /// Minimal-norm least-squares solution of `A z = y`.
    fn apply(&self, y: &DVec) -> DVec {
        let mut w = self.u.transpose() * y;
        for k in 0..w.len().min(self.inv_s.len()) {
            w[k] *= self.inv_s[k];
        }
        &self.v * w
    }
}

fn center_inplace(x: &mut DVec) {
    let m = x.len() / 3;
    if m == 0 {
        return;
    }
    for axis in 0..3 {
        let mean: f64 = (0..m).map(|k| x[3 * k + axis]).sum::<f64>() / m as f64;
        for k in 0..m {
            x[3 * k + axis] -= mean;
        }
    }
}

/// Deterministic warm start: the smallest singular direction of the stacked
/// matrix with shift-penalty rows appended (so the uniform-shift gauge cannot
/// swallow the shape), centered and normalized.
fn warm_start(dense: &DMat) -> DVec {
    let n = dense.ncols();
    let m = n / 3;
    let mu = (dense.norm() / (dense.nrows().max(1) as f64).sqrt()).max(1.0);
    let mut aug = DMat::zeros(dense.nrows() + 3, n);
    aug.view_mut((0, 0), (dense.nrows(), n)).copy_from(dense);
    for axis in 0..3 {
        for k in 0..m {
            aug[(dense.nrows() + axis, 3 * k + axis)] = mu / (m as f64).sqrt();
        }
    }
    let svd = aug.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let mut min_idx = 0;
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] < svd.singular_values[min_idx] {
            min_idx = k;
        }
    }
    let mut x = DVec::from_iterator(n, (0..n).map(|c| v_t[(min_idx, c)]));
    center_inplace(&mut x);
    let norm = x.norm();
    if norm > 1e-12 {
        x /= norm;
    } else {
        // pathological: fall back to a fixed centered unit vector
        x = DVec::zeros(n);
        if m >= 2 {
            x[0] = 0.5f64.sqrt();
            x[3] = -(0.5f64.sqrt());
        } else if n > 0 {
            x[0] = 1.0;
        }
    }
    x
}

/// ADMM for `min ||A x||_1 s.t. ||x||_2 = 1`:
/// soft-thresholding slack update, least-squares x-update followed by
/// projection back to the (centered) unit sphere, then the multiplier step.
pub fn admm_solve(system: &TranslationSystem, params: &AdmmParams) -> AdmmOutcome {
    admm_solve_traced(system, params, |_| {})
}

/// [`admm_solve`] with an iterate observer (used by invariant tests).
pub fn admm_solve_traced(
    system: &TranslationSystem,
    params: &AdmmParams,
    mut on_iterate: impl FnMut(&DVec),
) -> AdmmOutcome {
    let dense = system.a.to_dense();
    let pinv = Pinv::new(&dense);
    let beta = if system.beta > 0.0 { system.beta } else { params.beta };

    let mut x = warm_start(&dense);
    let mut lambda = DVec::zeros(dense.nrows());
    let mut best_x = x.clone();
    let mut best_obj = (&dense * &x).abs().sum();
    let mut outcome_iters = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut e = DVec::zeros(dense.nrows());

    for iter in 0..params.max_iters {
        outcome_iters = iter + 1;
        let ax = &dense * &x;
        e = soft_threshold(&(&ax + &(&lambda / beta)), 1.0 / beta);
        // x-update: least squares of A x = e - lambda/beta, taking the
        // minimal-norm correction from the current iterate so the gauge
        // components survive, then re-centering and renormalizing.
        let rhs = &e - &(&lambda / beta);
        let correction = pinv.apply(&(&rhs - &ax));
        let mut x_new = &x + &correction;
        center_inplace(&mut x_new);
        let norm = x_new.norm();
        if norm > 1e-12 {
            x_new /= norm;
        } else {
            x_new = x.clone();
        }
        dual = amax_or_zero(&(&x_new - &x));
        x = x_new;
        on_iterate(&x);
        let ax_new = &dense * &x;
        lambda += (&ax_new - &e) * beta;
        primal = amax_or_zero(&(&ax_new - &e));

        let obj = ax_new.abs().sum();
        if obj < best_obj {
            best_obj = obj;
            best_x = x.clone();
        }
        if primal < params.primal_tol && dual < params.dual_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        x = best_x;
    }
    let objective = (&dense * &x).abs().sum();
    AdmmOutcome {
        x,
        e,
        lambda,
        iterations: outcome_iters,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        objective,
    }
}

/// ADMM for the anchored affine variant `min ||A x - b||_1` (no sphere
/// constraint); used by loop closure where the gauge is fixed by the anchor
/// keyframe and the metric loop edge.
pub fn admm_solve_affine(a: &DMat, b: &DVec, x0: &DVec, params: &AdmmParams) -> AdmmOutcome {
    let pinv = Pinv::new(a);
    let beta = params.beta;
    let mut x = x0.clone();
    let mut lambda = DVec::zeros(a.nrows());
    let mut best_x = x.clone();
    let mut best_obj = (a * &x - b).abs().sum();
    let mut iters = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut e = DVec::zeros(a.nrows());

    for iter in 0..params.max_iters {
        iters = iter + 1;
        let res = a * &x - b;
        e = soft_threshold(&(&res + &(&lambda / beta)), 1.0 / beta);
        let rhs = &e + b - &(&lambda / beta);
        let correction = pinv.apply(&(&rhs - &(a * &x)));
        let x_new = &x + &correction;
        dual = amax_or_zero(&(&x_new - &x));
        x = x_new;
        let res_new = a * &x - b;
        lambda += (&res_new - &e) * beta;
        primal = amax_or_zero(&(&res_new - &e));
        let obj = res_new.abs().sum();
        if obj < best_obj {
            best_obj = obj;
            best_x = x.clone();
        }
        if primal < params.primal_tol && dual < params.dual_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        x = best_x;
    }
    let objective = (a * &x - b).abs().sum();
    AdmmOutcome {
        x,
        e,
        lambda,
        iterations: iters,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        objective,
    }
}

/// Diagnostics of one translation-averaging solve.
#[derive(Debug, Clone)]
pub struct TransAvgReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub objective: f64,
    pub scale_free_pairs: usize,
    pub rows: usize,
}

/// Recovers per-frame positions from relative directions with rotations held
/// fixed. The output is centered with unit stacked norm (gauge-free up to
/// global similarity); the caller anchors it.
pub fn translation_averaging(
    rotations: &BTreeMap<usize, Rotation>,
    edges: &[(usize, usize, Vec3)],
    params: &AdmmParams,
) -> Result<(BTreeMap<usize, Vec3>, TransAvgReport), TransAvgError> {
    let frame_index: BTreeMap<usize, usize> =
        rotations.keys().copied().enumerate().map(|(k, id)| (id, k)).collect();
    let mut pairs = Vec::with_capacity(edges.len());
    for &(i, j, d) in edges {
        let (r_i, r_j) = match (rotations.get(&i), rotations.get(&j)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(TransAvgError::UnknownFrame),
        };
        pairs.push(PairConstraint::from_edge(i, j, r_i, r_j, d));
    }
    let covis = covisibility_pairs(&pairs);
    let a = build_constraint_matrix(&pairs, &covis, &frame_index)?;
    let rows = a.nrows();
    let system = TranslationSystem { a, beta: params.beta };
    let outcome = admm_solve(&system, params);
    let mut positions = BTreeMap::new();
    for (id, k) in &frame_index {
        positions.insert(*id, Vec3::new(outcome.x[3 * k], outcome.x[3 * k + 1], outcome.x[3 * k + 2]));
    }
    let report = TransAvgReport {
        iterations: outcome.iterations,
        primal_residual: outcome.primal_residual,
        dual_residual: outcome.dual_residual,
        converged: outcome.converged,
        objective: outcome.objective,
        scale_free_pairs: pairs.iter().filter(|p| p.scale_free).count(),
        rows,
    };
    Ok((positions, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::so3_exp;

    fn looking_rotation(k: usize) -> Rotation {
        so3_exp(&Vec3::new(0.2 * (k as f64 * 0.9).sin(), 0.3 * (k as f64 * 0.7).cos(), 0.15 * k as f64))
    }

    /// Ground-truth edge direction in the camera-i frame.
    fn edge_direction(r_i: &Rotation, p_i: &Vec3, p_j: &Vec3) -> Vec3 {
        r_i.apply(&(p_j - p_i)).normalize()
    }

    #[test]
    fn pair_scales_parallel_directions_rejected() {
        let dir = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(
            solve_pair_scales(&Rotation::identity(), &Rotation::identity(), &dir),
            Err(TransAvgError::ParallelDirections)
        );
    }

    #[test]
    fn pair_scales_substitute_back_to_zero() {
        let r_i = so3_exp(&Vec3::new(-0.316, -0.156, 0.01));
        let r_j = so3_exp(&Vec3::new(-0.581, -0.055, -0.311));
        let dir = Vec3::new(-0.758, -0.564, -0.328).normalize();
        let scales = solve_pair_scales(&r_i, &r_j, &dir).unwrap();
        assert!(scales.s_i > 0.0 && scales.s_j > 0.0);
        assert!(pair_scale_residual(&r_i, &r_j, &dir, &scales) < 1e-9);
    }

    #[test]
    fn pair_scales_invariant_under_scene_scale() {
        // Scaling the scene leaves rotations and the unit direction unchanged,
        // so the pair scales must be bit-identical.
        let r_i = so3_exp(&Vec3::new(0.1, 0.4, -0.3));
        let r_j = so3_exp(&Vec3::new(0.5, -0.1, 0.2));
        let dir = Vec3::new(-0.2, 0.9, 0.4).normalize();
        let s1 = solve_pair_scales(&r_i, &r_j, &dir).unwrap();
        let s2 = solve_pair_scales(&r_i, &r_j, &dir).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn ground_truth_lies_in_nullspace() {
        // 5 cameras on a 3D loop, complete edge set.
        let positions: Vec<Vec3> = (0..5)
            .map(|k| {
                let th = k as f64 * core::f64::consts::TAU / 5.0;
                Vec3::new(th.cos(), th.sin(), 0.3 * (2.0 * th).sin())
            })
            .collect();
        let rotations: BTreeMap<usize, Rotation> = (0..5).map(|k| (k, looking_rotation(k))).collect();
        let mut pairs = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                let d = edge_direction(&rotations[&i], &positions[i], &positions[j]);
                pairs.push(PairConstraint::from_edge(i, j, &rotations[&i], &rotations[&j], d));
            }
        }
        let covis = covisibility_pairs(&pairs);
        let frame_index: BTreeMap<usize, usize> = (0..5).map(|k| (k, k)).collect();
        let a = build_constraint_matrix(&pairs, &covis, &frame_index).unwrap();
        let mut x = DVec::zeros(15);
        for k in 0..5 {
            for r in 0..3 {
                x[3 * k + r] = positions[k][r];
            }
        }
        x /= x.norm();
        assert!(a.matvec(&x).amax() < 1e-9);
    }

    #[test]
    fn uniform_shift_is_annihilated() {
        let positions: Vec<Vec3> =
            (0..4).map(|k| Vec3::new(k as f64, (k as f64 * 1.3).sin(), 0.5 * k as f64)).collect();
        let rotations: BTreeMap<usize, Rotation> = (0..4).map(|k| (k, looking_rotation(k + 2))).collect();
        let mut pairs = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                let d = edge_direction(&rotations[&i], &positions[i], &positions[j]);
                pairs.push(PairConstraint::from_edge(i, j, &rotations[&i], &rotations[&j], d));
            }
        }
        let covis = covisibility_pairs(&pairs);
        let frame_index: BTreeMap<usize, usize> = (0..4).map(|k| (k, k)).collect();
        let a = build_constraint_matrix(&pairs, &covis, &frame_index).unwrap();
        for c in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-0.3, 2.0, 0.7), Vec3::new(0.0, 0.0, -5.0)] {
            let mut shift = DVec::zeros(12);
            for k in 0..4 {
                for r in 0..3 {
                    shift[3 * k + r] = c[r];
                }
            }
            assert!(a.matvec(&shift).amax() < 1e-10);
        }
    }

    #[test]
    fn single_pair_of_pairs_is_three_rows() {
        let pe = PairConstraint::from_edge(
            0,
            1,
            &looking_rotation(0),
            &looking_rotation(1),
            Vec3::new(0.0, 0.3, 1.0).normalize(),
        );
        let pf = PairConstraint::from_edge(
            1,
            2,
            &looking_rotation(1),
            &looking_rotation(2),
            Vec3::new(0.4, -0.1, 1.0).normalize(),
        );
        let covis = covisibility_pairs(&[pe.clone(), pf.clone()]);
        assert_eq!(covis, alloc::vec![(0, 1)]);
        let we = skew(&pe.world_direction()) * pe.weight();
        let wf = skew(&pf.world_direction()) * pf.weight();
        let block = ConstraintBlock { cols: [0, 1, 1, 2], mats: [-we, we, wf, -wf] };
        let a = ConstraintMatrix { ncols: 9, blocks: alloc::vec![block] };
        assert_eq!(a.nrows(), 3);
    }

    #[test]
    fn zero_matrix_accepts_any_unit_x_immediately() {
        let a = ConstraintMatrix { ncols: 6, blocks: Vec::new() };
        let system = TranslationSystem { a, beta: 1.0 };
        let out = admm_solve(&system, &AdmmParams::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!((out.x.norm() - 1.0).abs() < 1e-12);
        assert_eq!(out.e.len(), 0);
    }

    #[test]
    fn collinear_parallel_scene_is_rejected() {
        // Cameras on a line, all looking the same way: directions stay
        // parallel and the rank test must fail loudly.
        let rotations: BTreeMap<usize, Rotation> = (0..4).map(|k| (k, Rotation::identity())).collect();
        let mut edges = Vec::new();
        for i in 0..4usize {
            for j in i + 1..4 {
                edges.push((i, j, Vec3::new(0.0, 0.0, 1.0)));
            }
        }
        match translation_averaging(&rotations, &edges, &AdmmParams::default()) {
            Err(TransAvgError::InsufficientConstraints { .. }) => {}
            other => panic!("expected InsufficientConstraints, got {:?}", other.map(|_| ())),
        }
    }
}
