//! Rotation and pose types, SO(3) exponential/logarithm, rotation metrics and
//! essential-matrix algebra.
//!
//! Rotations are stored as 3x3 matrices; quaternions appear only at
//! serialization boundaries. Compositions repair orthonormality drift by
//! re-projection once the `m^T m = I` check exceeds 1e-9.

use crate::la::*;
use thiserror::Error;

/// Orthonormality / determinant tolerance for [`Rotation`] invariants.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeomError {
    #[error("translation norm below 1e-12, essential matrix undefined")]
    ZeroTranslation,
    #[error("matrix numerically rank-deficient, nearest rotation undefined")]
    DegenerateMatrix,
    #[error("rotation angle within 1e-6 of pi, logarithm ill-conditioned")]
    NearPiSingularity,
    #[error("matrix is not orthonormal with determinant +1")]
    NotARotation,
    #[error("camera intrinsics must have positive focal lengths")]
    InvalidIntrinsics,
}

/// Element of SO(3): a 3x3 orthonormal matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix after checking the SO(3) invariants at 1e-9.
    pub fn new(m: Mat3) -> Result<Self, GeomError> {
        if orthonormality_error(&m) <= ROTATION_TOL && (m.determinant() - 1.0).abs() <= ROTATION_TOL
        {
            Ok(Rotation(m))
        } else {
            Err(GeomError::NotARotation)
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Matrix product `self * rhs` with drift repair: if accumulated rounding
    /// pushes the product off the manifold past 1e-9 it is re-projected.
    pub fn compose(&self, rhs: &Rotation) -> Rotation {
        let m = self.0 * rhs.0;
        if orthonormality_error(&m) > ROTATION_TOL {
            project_to_rotation(&m).expect("product of rotations stays near SO(3)")
        } else {
            Rotation(m)
        }
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle away from the identity, in [0, pi].
    pub fn angle(&self) -> f64 {
        angular_distance(self, &Rotation::identity())
    }
}

impl core::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

impl core::ops::Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        self.compose(rhs)
    }
}

impl core::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid camera pose `[R|t]` mapping world points to camera coordinates,
/// `x_cam = R x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn position(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation)
    }

    /// Builds the pose of a camera at world position `p` with orientation `r`.
    pub fn from_rotation_position(rotation: Rotation, position: Vec3) -> Self {
        let translation = -(rotation * position);
        Pose { rotation, translation }
    }

    pub fn transform(&self, world: &Vec3) -> Vec3 {
        self.rotation.apply(world) + self.translation
    }
}

/// Essential matrix `[t]x R`; singular values are (s, s, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Mat3);

impl EssentialMatrix {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Projects an arbitrary matrix onto the essential manifold with unit
    /// scale: singular values are replaced by (1, 1, 0).
    pub fn projected(m: &Mat3) -> Result<Self, GeomError> {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.ok_or(GeomError::DegenerateMatrix)?, svd.v_t.ok_or(GeomError::DegenerateMatrix)?);
        if svd.singular_values[1] <= 1e-12 * svd.singular_values[0].max(1e-300) {
            return Err(GeomError::DegenerateMatrix);
        }
        let s = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        Ok(EssentialMatrix(u * s * v_t))
    }
}

/// Camera intrinsics with focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        if fx > 0.0 && fy > 0.0 {
            Ok(CameraIntrinsics { fx, fy, cx, cy })
        } else {
            Err(GeomError::InvalidIntrinsics)
        }
    }
}

/// Frobenius distance of `m^T m` from the identity.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Cross-product matrix: `skew(t) * v == t x v`.
pub fn skew(t: &Vec3) -> Mat3 {
    Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// `E = [t]x R`. The translation must be nonzero for E to be meaningful.
pub fn essential_from_pose(r: &Rotation, t: &Vec3) -> Result<EssentialMatrix, GeomError> {
    if t.norm() < 1e-12 {
        return Err(GeomError::ZeroTranslation);
    }
    Ok(EssentialMatrix(skew(t) * r.matrix()))
}

/// Relative rotation from frame i to frame j: `R_j R_i^T`.
pub fn relative_rotation(r_i: &Rotation, r_j: &Rotation) -> Rotation {
    r_j.compose(&r_i.inverse())
}

/// Frobenius distance between two rotations; range [0, 2*sqrt(2)].
pub fn chordal_distance(a: &Rotation, b: &Rotation) -> f64 {
    (a.matrix() - b.matrix()).norm()
}

/// Geodesic angle between two rotations, in [0, pi].
///
/// Uses both the trace (cosine) and the antisymmetric part (sine) of `A B^T`
/// through `atan2`, which stays accurate at both ends of the range where the
/// plain clamped-arccos form loses ~8 digits.
pub fn angular_distance(a: &Rotation, b: &Rotation) -> f64 {
    let m = a.matrix() * b.matrix().transpose();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() * 0.5;
    s.atan2(c)
}

/// Frobenius-nearest element of SO(3).
///
/// The sign of the smallest singular direction is corrected so the result has
/// determinant +1. Fails if the matrix is numerically rank < 2.
pub fn project_to_rotation(m: &Mat3) -> Result<Rotation, GeomError> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(GeomError::DegenerateMatrix)?, svd.v_t.ok_or(GeomError::DegenerateMatrix)?);
    let s = &svd.singular_values;
    if s[1] <= 1e-12 * s[0].max(1.0) {
        return Err(GeomError::DegenerateMatrix);
    }
    let det_sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let d = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, det_sign));
    Ok(Rotation(u * d * v_t))
}

/// Exponential map so(3) -> SO(3) (Rodrigues formula).
pub fn so3_exp(w: &Vec3) -> Rotation {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < 1e-10 {
        // Taylor expansion of sin(t)/t and (1-cos(t))/t^2.
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let m = Mat3::identity() + k * a + k * k * b;
    Rotation(m)
}

/// Logarithm map SO(3) -> so(3); inverse of [`so3_exp`] away from angle pi.
pub fn so3_log(r: &Rotation) -> Result<Vec3, GeomError> {
    let theta = r.angle();
    if theta >= core::f64::consts::PI - 1e-6 {
        return Err(GeomError::NearPiSingularity);
    }
    let m = r.matrix();
    let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    if theta < 1e-10 {
        Ok(v * 0.5)
    } else {
        Ok(v * (theta / (2.0 * theta.sin())))
    }
}
