//! Relative rotation (and unit translation direction) between two frames from
//! six selected bearing correspondences.
//!
//! The solver iterates over the fifteen two-pair subsets of the six points:
//! each subset seeds a rotation-only hypothesis, which is kept only when the
//! independence gate says the relative translation is small enough for the
//! rotation to be solved without it. When every hypothesis is rejected the
//! caller falls back to the full essential-matrix pipeline (linear nullspace
//! solve on all six pairs refined on the essential manifold, four-candidate
//! decomposition with a cheirality vote, Gauss-Newton polish).
//!
//! Epipolar convention: `f_j^T E f_i = 0` with `E = [t]x R`, `x_j = R x_i + t`.

use crate::correspond::{select_representative_six, Correspondence, CorrespondError, GridConfig};
use crate::geom::{
    essential_from_pose, project_to_rotation, skew, CameraIntrinsics, EssentialMatrix, Rotation,
};
use crate::la::*;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RelRotError {
    #[error("bearing design matrix is rank-deficient")]
    DegenerateConfiguration,
    #[error("cheirality vote is tied, relative pose ambiguous")]
    CheiralityAmbiguity,
    #[error("all two-pair hypotheses rejected by the independence gate")]
    NoValidHypothesis,
    #[error("point selection failed: {0}")]
    Selection(CorrespondError),
}

impl From<CorrespondError> for RelRotError {
    fn from(e: CorrespondError) -> Self {
        RelRotError::Selection(e)
    }
}

/// Unit bearing vectors of one correspondence in both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingPair {
    pub f_i: Vec3,
    pub f_j: Vec3,
}

/// Relative motion from frame i to frame j: `x_j = R x_i + s * direction`.
/// `direction` is meaningful only when `direction_reliable` is set (a
/// near-zero baseline leaves it undetermined).
#[derive(Debug, Clone, Copy)]
pub struct RelativeMotion {
    pub rotation: Rotation,
    pub direction: Vec3,
    pub direction_reliable: bool,
    /// Mean epipolar residual `|f_j^T E f_i|` at unit essential scale, or the
    /// mean rotation misfit `||(R f_i) x f_j||` when no direction exists.
    pub residual: f64,
}

/// Calibrates pixels and normalizes to unit bearings:
/// `((u-cx)/fx, (v-cy)/fy, 1) / ||.||`.
pub fn bearings_from_pixels(points: &[([f64; 2], [f64; 2])], k: &CameraIntrinsics) -> Vec<BearingPair> {
    points
        .iter()
        .map(|(p_i, p_j)| {
            let cal = |p: &[f64; 2]| {
                Vec3::new((p[0] - k.cx) / k.fx, (p[1] - k.cy) / k.fy, 1.0).normalize()
            };
            BearingPair { f_i: cal(p_i), f_j: cal(p_j) }
        })
        .collect()
}

/// Mean absolute epipolar residual at the essential matrix's own scale.
pub fn epipolar_residual(e: &EssentialMatrix, pairs: &[BearingPair]) -> f64 {
    let m = e.matrix();
    pairs.iter().map(|p| (p.f_j.transpose() * m * p.f_i)[0].abs()).sum::<f64>() / pairs.len() as f64
}

fn rotation_misfit(r: &Rotation, pairs: &[BearingPair]) -> f64 {
    pairs.iter().map(|p| r.apply(&p.f_i).cross(&p.f_j).norm()).sum::<f64>() / pairs.len() as f64
}

/// Trace-constraint defect of a candidate essential matrix: the entries of
/// `2 M M^T M - tr(M M^T) M` plus `det M`, all zero exactly on the manifold.
fn essential_defect(m: &Mat3) -> f64 {
    let mmt = m * m.transpose();
    let t = 2.0 * mmt * m - m * mmt.trace();
    t.norm_squared() + m.determinant() * m.determinant()
}

/// Least-squares essential matrix from six bearing pairs.
///
/// The stacked 6x9 design matrix keeps a three-dimensional nullspace, so the
/// smallest singular directions are searched (coarse sphere grid plus local
/// descent on the trace-constraint defect) for the combination that is
/// actually essential, then projected onto the manifold.
pub fn estimate_essential_6pt(pairs: &[BearingPair]) -> Result<EssentialMatrix, RelRotError> {
    let n = pairs.len();
    if n < 6 {
        return Err(RelRotError::DegenerateConfiguration);
    }
    let mut design = DMat::zeros(n, 9);
    for (row, p) in pairs.iter().enumerate() {
        let outer = p.f_j * p.f_i.transpose();
        for a in 0..3 {
            for b in 0..3 {
                design[(row, 3 * a + b)] = outer[(a, b)];
            }
        }
    }
    let svd = design.svd(false, true);
    let sv = &svd.singular_values;
    if sv[5] < 1e-10 * sv[0] {
        return Err(RelRotError::DegenerateConfiguration);
    }
    let v_t = svd.v_t.unwrap();
    let basis: [Mat3; 3] = core::array::from_fn(|k| {
        let row = 8 - k;
        Mat3::new(
            v_t[(row, 0)], v_t[(row, 1)], v_t[(row, 2)],
            v_t[(row, 3)], v_t[(row, 4)], v_t[(row, 5)],
            v_t[(row, 6)], v_t[(row, 7)], v_t[(row, 8)],
        )
    });
    let compose = |c: &Vec3| -> Mat3 { basis[0] * c[0] + basis[1] * c[1] + basis[2] * c[2] };

    // Coarse search over the coefficient hemisphere.
    let mut best_c = Vec3::new(1.0, 0.0, 0.0);
    let mut best_val = f64::INFINITY;
    let golden = core::f64::consts::PI * (3.0 - 5f64.sqrt());
    let grid = 256;
    let mut consider = |c: Vec3, best_c: &mut Vec3, best_val: &mut f64| {
        let val = essential_defect(&compose(&c));
        if val < *best_val {
            *best_val = val;
            *best_c = c;
        }
    };
    for k in 0..grid {
        let z = 1.0 - (k as f64 + 0.5) / grid as f64; // hemisphere suffices: defect is even
        let r = (1.0 - z * z).max(0.0).sqrt();
        let th = golden * k as f64;
        consider(Vec3::new(r * th.cos(), r * th.sin(), z), &mut best_c, &mut best_val);
    }
    consider(Vec3::new(1.0, 0.0, 0.0), &mut best_c, &mut best_val);
    consider(Vec3::new(0.0, 1.0, 0.0), &mut best_c, &mut best_val);
    consider(Vec3::new(0.0, 0.0, 1.0), &mut best_c, &mut best_val);

    // Local descent on the sphere with numeric gradients.
    let mut c = best_c;
    let mut val = best_val;
    let mut step = 0.1;
    for _ in 0..200 {
        if val < 1e-26 || step < 1e-12 {
            break;
        }
        let (t1, t2) = tangent_basis(&c);
        let h = 1e-6;
        let g1 = (essential_defect(&compose(&(c + t1 * h).normalize())) - essential_defect(&compose(&(c - t1 * h).normalize()))) / (2.0 * h);
        let g2 = (essential_defect(&compose(&(c + t2 * h).normalize())) - essential_defect(&compose(&(c - t2 * h).normalize()))) / (2.0 * h);
        let grad = t1 * g1 + t2 * g2;
        let gnorm = grad.norm();
        if gnorm < 1e-18 {
            break;
        }
        let trial = (c - grad * (step / gnorm)).normalize();
        let tval = essential_defect(&compose(&trial));
        if tval < val {
            c = trial;
            val = tval;
            step *= 1.6;
        } else {
            step *= 0.5;
        }
    }

    EssentialMatrix::projected(&compose(&c)).map_err(|_| RelRotError::DegenerateConfiguration)
}

fn tangent_basis(v: &Vec3) -> (Vec3, Vec3) {
    let pick = if v.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let t1 = v.cross(&pick).normalize();
    let t2 = v.cross(&t1).normalize();
    (t1, t2)
}

/// Least-squares depths of one pair under a candidate motion; both positive
/// means the triangulated point sits in front of both cameras.
fn depths(r: &Rotation, t: &Vec3, p: &BearingPair) -> (f64, f64) {
    // d_j f_j = d_i R f_i + t  ->  [R f_i, -f_j] [d_i d_j]^T = -t
    let a = r.apply(&p.f_i);
    let b = -p.f_j;
    let g00 = a.dot(&a);
    let g01 = a.dot(&b);
    let g11 = b.dot(&b);
    let r0 = a.dot(&(-t));
    let r1 = b.dot(&(-t));
    let det = g00 * g11 - g01 * g01;
    if det.abs() < 1e-14 {
        return (0.0, 0.0);
    }
    ((g11 * r0 - g01 * r1) / det, (g00 * r1 - g01 * r0) / det)
}

fn cheirality_count(r: &Rotation, t: &Vec3, pairs: &[BearingPair]) -> usize {
    pairs.iter().filter(|p| {
        let (d_i, d_j) = depths(r, t, p);
        d_i > 0.0 && d_j > 0.0
    }).count()
}

/// Standard four-candidate decomposition of an essential matrix with the
/// cheirality vote over the given pairs.
pub fn decompose_essential(e: &EssentialMatrix, pairs: &[BearingPair]) -> Result<RelativeMotion, RelRotError> {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.ok_or(RelRotError::DegenerateConfiguration)?;
    let mut v_t = svd.v_t.ok_or(RelRotError::DegenerateConfiguration)?;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = project_to_rotation(&(u * w * v_t)).map_err(|_| RelRotError::DegenerateConfiguration)?;
    let r2 = project_to_rotation(&(u * w.transpose() * v_t)).map_err(|_| RelRotError::DegenerateConfiguration)?;
    let t = Vec3::new(u[(0, 2)], u[(1, 2)], u[(2, 2)]);

    let mut scored: Vec<(usize, Rotation, Vec3)> = Vec::with_capacity(4);
    for r in [r1, r2] {
        for sign in [1.0, -1.0] {
            let tc = t * sign;
            scored.push((cheirality_count(&r, &tc, pairs), r, tc));
        }
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0));
    if scored[0].0 == scored[1].0 {
        return Err(RelRotError::CheiralityAmbiguity);
    }
    let (_, rotation, direction) = scored[0];
    let e_best = essential_from_pose(&rotation, &direction).map_err(|_| RelRotError::DegenerateConfiguration)?;
    Ok(RelativeMotion {
        rotation,
        direction,
        direction_reliable: true,
        residual: epipolar_residual(&e_best, pairs),
    })
}

/// Coplanarity triple-product gate for solving rotation independent of
/// translation. The mismatch normals `m_n = (R f_i^n) x f_j^n` vanish for
/// pure rotation and grow (and lose coplanarity under a rotation-only fit)
/// with baseline, so the test accepts exactly the small-translation regime.
pub fn independence_check(pairs: &[BearingPair], r: &Rotation, tol: f64) -> bool {
    if tol == f64::INFINITY {
        return true;
    }
    let m: Vec<Vec3> = pairs.iter().map(|p| r.apply(&p.f_i).cross(&p.f_j)).collect();
    if m.len() < 2 {
        return false;
    }
    let mut q: f64 = 0.0;
    if m.len() == 2 {
        q = m[0].cross(&m[1]).norm();
    } else {
        for a in 0..m.len() {
            for b in a + 1..m.len() {
                for c in b + 1..m.len() {
                    q = q.max(Mat3::from_columns(&[m[a], m[b], m[c]]).determinant().abs());
                }
            }
        }
    }
    q < tol
}

/// Exact rotation aligning two bearing pairs under the pure-rotation model
/// (triad construction stabilized with the cross products).
fn triad_rotation(a: &BearingPair, b: &BearingPair) -> Option<Rotation> {
    let m = b.f_j * b.f_i.transpose() + a.f_j * a.f_i.transpose()
        + a.f_j.cross(&b.f_j) * a.f_i.cross(&b.f_i).transpose();
    project_to_rotation(&m).ok()
}

fn wahba_rotation(pairs: &[BearingPair]) -> Option<Rotation> {
    let mut m = Mat3::zeros();
    for p in pairs {
        m += p.f_j * p.f_i.transpose();
    }
    project_to_rotation(&m).ok()
}

/// Direction solve with the rotation fixed: rows `(R f_i^n) x f_j^n`
/// annihilate the baseline; the smallest right singular vector is the
/// direction, reliable when the second singular value clears the floor.
fn direction_given_rotation(r: &Rotation, pairs: &[BearingPair]) -> (Vec3, bool) {
    let mut m = DMat::zeros(pairs.len(), 3);
    for (k, p) in pairs.iter().enumerate() {
        let row = r.apply(&p.f_i).cross(&p.f_j);
        for c in 0..3 {
            m[(k, c)] = row[c];
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let t = Vec3::new(v_t[(2, 0)], v_t[(2, 1)], v_t[(2, 2)]).normalize();
    let reliable = svd.singular_values[1] > 1e-8;
    if !reliable {
        return (t, false);
    }
    // fix the sign by the cheirality vote
    let pos = cheirality_count(r, &t, pairs);
    let neg = cheirality_count(r, &(-t), pairs);
    if neg > pos {
        (-t, true)
    } else {
        (t, true)
    }
}

fn hypothesis_motion(r: Rotation, pairs: &[BearingPair]) -> RelativeMotion {
    let (direction, reliable) = direction_given_rotation(&r, pairs);
    let residual = if reliable {
        match essential_from_pose(&r, &direction) {
            Ok(e) => epipolar_residual(&e, pairs),
            Err(_) => rotation_misfit(&r, pairs),
        }
    } else {
        rotation_misfit(&r, pairs)
    };
    RelativeMotion { rotation: r, direction, direction_reliable: reliable, residual }
}

/// Rotation-only estimation over the fifteen two-pair hypothesis seeds,
/// gated by [`independence_check`]; returns the lowest-residual surviving
/// hypothesis or `NoValidHypothesis` when the gate rejects all of them.
pub fn estimate_relative_rotation_from_bearings(
    pairs: &[BearingPair],
    independence_tol: f64,
) -> Result<RelativeMotion, RelRotError> {
    if pairs.len() < 2 {
        return Err(RelRotError::DegenerateConfiguration);
    }
    let mut best: Option<RelativeMotion> = None;
    let mut push = |r: Rotation, best: &mut Option<RelativeMotion>| {
        if independence_check(pairs, &r, independence_tol) {
            let cand = hypothesis_motion(r, pairs);
            if best.as_ref().map_or(true, |b| cand.residual < b.residual) {
                *best = Some(cand);
            }
        }
    };
    for a in 0..pairs.len() {
        for b in a + 1..pairs.len() {
            if let Some(r) = triad_rotation(&pairs[a], &pairs[b]) {
                push(r, &mut best);
            }
        }
    }
    if let Some(r) = wahba_rotation(pairs) {
        push(r, &mut best);
    }
    best.ok_or(RelRotError::NoValidHypothesis)
}

/// Gauss-Newton polish of `(R, t)` on the epipolar residuals of all pairs,
/// with `t` held on the unit sphere. Numeric Jacobians; the problem is
/// five-dimensional, so this is cheap and deterministic.
fn polish_motion(motion: &RelativeMotion, pairs: &[BearingPair]) -> RelativeMotion {
    use crate::geom::so3_exp;
    let mut r = motion.rotation;
    let mut t = motion.direction;
    let residuals = |r: &Rotation, t: &Vec3| -> DVec {
        let e = skew(t) * r.matrix();
        DVec::from_iterator(pairs.len(), pairs.iter().map(|p| (p.f_j.transpose() * e * p.f_i)[0]))
    };
    let mut mu = 1e-8;
    let mut cur = residuals(&r, &t);
    for _ in 0..25 {
        let (b1, b2) = tangent_basis(&t);
        let h = 1e-7;
        let n = pairs.len();
        let mut jac = DMat::zeros(n, 5);
        for k in 0..3 {
            let mut w = Vec3::zeros();
            w[k] = h;
            let plus = residuals(&(so3_exp(&w).compose(&r)), &t);
            let minus = residuals(&(so3_exp(&(-w)).compose(&r)), &t);
            for row in 0..n {
                jac[(row, k)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        for (k, basis) in [b1, b2].iter().enumerate() {
            let plus = residuals(&r, &(t + basis * h).normalize());
            let minus = residuals(&r, &(t - basis * h).normalize());
            for row in 0..n {
                jac[(row, 3 + k)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        let jt = jac.transpose();
        let mut h_mat = &jt * &jac;
        for k in 0..5 {
            h_mat[(k, k)] += mu;
        }
        let g = &jt * &cur;
        let delta = match h_mat.cholesky() {
            Some(ch) => ch.solve(&(-g)),
            None => break,
        };
        let w = Vec3::new(delta[0], delta[1], delta[2]);
        let r_new = so3_exp(&w).compose(&r);
        let t_new = (t + b1 * delta[3] + b2 * delta[4]).normalize();
        let next = residuals(&r_new, &t_new);
        if next.norm_squared() < cur.norm_squared() {
            r = r_new;
            t = t_new;
            cur = next;
            mu = (mu * 0.3).max(1e-12);
            if cur.norm_squared() < 1e-30 {
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e6 {
                break;
            }
        }
    }
    let (t_signed, reliable) = {
        let pos = cheirality_count(&r, &t, pairs);
        let neg = cheirality_count(&r, &(-t), pairs);
        if neg > pos { (-t, true) } else { (t, true) }
    };
    let residual = match essential_from_pose(&r, &t_signed) {
        Ok(e) => epipolar_residual(&e, pairs),
        Err(_) => rotation_misfit(&r, pairs),
    };
    RelativeMotion { rotation: r, direction: t_signed, direction_reliable: reliable, residual }
}

/// Full essential pipeline without the independence gate: linear six-point
/// solve, decomposition, polish.
pub fn essential_pipeline(pairs: &[BearingPair]) -> Result<RelativeMotion, RelRotError> {
    let e = estimate_essential_6pt(pairs)?;
    let motion = decompose_essential(&e, pairs)?;
    Ok(polish_motion(&motion, pairs))
}

/// Relative rotation estimation from raw correspondences: grid selection of
/// the six representative points, bearings, two-pair hypothesis iteration.
pub fn estimate_relative_rotation(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    grid: &GridConfig,
    independence_tol: f64,
) -> Result<RelativeMotion, RelRotError> {
    let idx = select_representative_six(corrs, grid)?;
    let points: Vec<([f64; 2], [f64; 2])> = idx.iter().map(|&i| (corrs[i].p_i, corrs[i].p_j)).collect();
    let pairs = bearings_from_pixels(&points, k);
    estimate_relative_rotation_from_bearings(&pairs, independence_tol)
}

/// [`estimate_relative_rotation`] with the essential-pipeline fallback when
/// the independence gate rejects every hypothesis.
pub fn solve_relative_motion(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    grid: &GridConfig,
    independence_tol: f64,
) -> Result<RelativeMotion, RelRotError> {
    let idx = select_representative_six(corrs, grid)?;
    let points: Vec<([f64; 2], [f64; 2])> = idx.iter().map(|&i| (corrs[i].p_i, corrs[i].p_j)).collect();
    let pairs = bearings_from_pixels(&points, k);
    solve_relative_motion_from_bearings(&pairs, independence_tol)
}

/// Bearing-level variant of [`solve_relative_motion`].
pub fn solve_relative_motion_from_bearings(
    pairs: &[BearingPair],
    independence_tol: f64,
) -> Result<RelativeMotion, RelRotError> {
    match estimate_relative_rotation_from_bearings(pairs, independence_tol) {
        Ok(m) => Ok(m),
        Err(RelRotError::NoValidHypothesis) => essential_pipeline(pairs),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::so3_exp;
    use approx::assert_relative_eq;

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let b = bearings_from_pixels(&[([320.0, 240.0], [320.0, 240.0])], &k);
        assert_relative_eq!(b[0].f_i, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn unit_intrinsics_bearing() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let b = bearings_from_pixels(&[([3.0, 4.0], [3.0, 4.0])], &k);
        let expected = Vec3::new(3.0, 4.0, 1.0) / 26f64.sqrt();
        assert_relative_eq!(b[0].f_i, expected, epsilon = 1e-15);
    }

    #[test]
    fn bearings_are_unit_norm() {
        let k = CameraIntrinsics::new(480.0, 500.0, 310.0, 255.0).unwrap();
        let pts: Vec<([f64; 2], [f64; 2])> = (0..20)
            .map(|i| {
                let u = (i * 31 % 640) as f64;
                let v = (i * 57 % 480) as f64;
                ([u, v], [u + 1.0, v - 1.0])
            })
            .collect();
        for b in bearings_from_pixels(&pts, &k) {
            assert!((b.f_i.norm() - 1.0).abs() < 1e-12);
            assert!((b.f_j.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_bearings_are_degenerate() {
        let f = Vec3::new(0.1, 0.2, 1.0).normalize();
        let pairs = [BearingPair { f_i: f, f_j: f }; 6];
        // all f_i identical: design rank <= 3
        assert!(matches!(estimate_essential_6pt(&pairs), Err(RelRotError::DegenerateConfiguration)));
    }

    #[test]
    fn independence_gate_vacuous_at_infinite_tol() {
        let f = Vec3::new(0.0, 0.0, 1.0);
        let pairs = [BearingPair { f_i: f, f_j: f }; 2];
        assert!(independence_check(&pairs, &Rotation::identity(), f64::INFINITY));
    }

    #[test]
    fn pure_rotation_passes_independence() {
        let r = so3_exp(&Vec3::new(0.02, -0.01, 0.03));
        let pairs: Vec<BearingPair> = (0..6)
            .map(|k| {
                let f_i = Vec3::new(0.2 * (k as f64).sin(), 0.2 * (k as f64).cos(), 1.0).normalize();
                BearingPair { f_i, f_j: r.apply(&f_i) }
            })
            .collect();
        assert!(independence_check(&pairs, &r, 1e-8));
    }

    #[test]
    fn identical_frames_give_identity_rotation() {
        let pairs: Vec<BearingPair> = (0..6)
            .map(|k| {
                let f = Vec3::new(0.3 * (k as f64 * 1.1).sin(), 0.3 * (k as f64 * 0.7).cos(), 1.0).normalize();
                BearingPair { f_i: f, f_j: f }
            })
            .collect();
        let m = estimate_relative_rotation_from_bearings(&pairs, 1e-6).unwrap();
        assert!(m.rotation.angle() < 1e-10);
        assert!(m.residual < 1e-10);
        assert!(!m.direction_reliable);
    }
}
