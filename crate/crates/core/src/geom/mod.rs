//! Geometric primitives: poses, Plücker lines, cameras and residuals.
//!
//! Everything in this module is a plain value type. The pose convention used
//! throughout the crate is `x_query = s * R * X_map + t` (world to camera /
//! map to body), with `s = 1` for rigid poses.

mod camera;
mod compact;
mod gravity;
mod line;
mod pose;
mod residual;

pub use camera::{GeneralizedRay, Intrinsics, Observation2D, RigCalibration, RigCamera};
pub use compact::{
    codebook, codebook_basis, compact_plane_point, covering_radius, decode_compact, encode_compact,
    CompactLine, CODEBOOK_SIZE,
};
pub use gravity::{
    gravity_prealign, rotation_to_vertical, vertical_rotation, GravityPrior, VERTICAL,
};
pub use line::{lift_point, line_point_at, random_unit_vector, PluckerLine};
pub use pose::{rotation_distance, PoseModel, PoseSE3, PoseSim3};
pub use residual::{
    point_line_residual, point_point_residual, project_line, ray_line_incidence, ProjectedLine2D,
};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type RotationSO3 = Rotation3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("line passes through the camera center; its projection is undefined")]
    DegenerateProjection,
    #[error("image line has l1 = l2 = 0 (line at infinity)")]
    DegenerateLine,
    #[error("point has non-positive depth {0} in the camera frame")]
    BehindCamera(f64),
    #[error("direction vector has zero length")]
    ZeroDirection,
    #[error("moment is not orthogonal to the direction (v.w = {0})")]
    NotOrthogonal(f64),
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
    #[error("camera index {index} out of range for a rig with {len} cameras")]
    CameraIndex { index: usize, len: usize },
}

/// Skew-symmetric cross-product matrix, `skew(a) * b == a x b`.
pub fn skew(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Iteration cap for SVDs; without one, non-finite input never terminates.
pub(crate) const SVD_MAX_ITER: usize = 10_000;

/// Nearest rotation (Frobenius) to an arbitrary 3x3 matrix, with det = +1.
/// Non-finite input gives the identity.
pub fn project_to_rotation(m: &Matrix3<f64>) -> RotationSO3 {
    let Some(svd) = m.try_svd(true, true, f64::EPSILON, SVD_MAX_ITER) else {
        return RotationSO3::identity();
    };
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Rotation3::from_matrix_unchecked(u * d * v_t)
}
