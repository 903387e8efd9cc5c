use std::fmt::Debug;
use std::ops::Mul;

use nalgebra::{Matrix3x4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{RotationSO3, Vec3};

/// Rigid transform `x = R * X + T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSE3 {
    pub rotation: RotationSO3,
    pub translation: Vec3,
}

/// Similarity transform `x = s * R * X + t`, `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSim3 {
    pub scale: f64,
    pub rotation: RotationSO3,
    pub translation: Vec3,
}

impl PoseSE3 {
    pub fn new(rotation: RotationSO3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vector3::zeros())
    }

    /// Pose whose camera center sits at `center` (map frame).
    pub fn from_center(rotation: RotationSO3, center: Vec3) -> Self {
        Self::new(rotation, -(rotation * center))
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    /// `self ∘ rhs`: apply `rhs` first.
    pub fn compose(&self, rhs: &PoseSE3) -> Self {
        Self::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }

    /// Position of the frame origin expressed in the source (map) frame.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation)
    }

    /// The 3x4 projection matrix `[R | T]`.
    pub fn matrix3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

impl PoseSim3 {
    pub fn new(scale: f64, rotation: RotationSO3, translation: Vec3) -> Self {
        debug_assert!(scale > 0.0, "similarity scale must be positive");
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, Rotation3::identity(), Vector3::zeros())
    }

    pub fn from_se3(p: &PoseSE3) -> Self {
        Self::new(1.0, p.rotation, p.translation)
    }

    /// Drops the scale. Only meaningful when `scale == 1`.
    pub fn to_se3(&self) -> PoseSE3 {
        PoseSE3::new(self.rotation, self.translation)
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.scale * (self.rotation * x) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        let s_inv = 1.0 / self.scale;
        Self::new(s_inv, r_inv, -(r_inv * self.translation) * s_inv)
    }

    pub fn compose(&self, rhs: &PoseSim3) -> Self {
        Self::new(
            self.scale * rhs.scale,
            self.rotation * rhs.rotation,
            self.scale * (self.rotation * rhs.translation) + self.translation,
        )
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation) / self.scale
    }
}

impl Mul for PoseSim3 {
    type Output = PoseSim3;
    fn mul(self, rhs: PoseSim3) -> PoseSim3 {
        self.compose(&rhs)
    }
}

/// Common interface over rigid and similarity poses so estimation code can be
/// written once.
pub trait PoseModel: Copy + Debug + Send + Sync + 'static {
    /// Whether the scale is a free parameter.
    const HAS_SCALE: bool;

    fn to_sim3(&self) -> PoseSim3;

    /// Converts back, discarding the scale for rigid poses.
    fn from_sim3(p: &PoseSim3) -> Self;

    fn rotation(&self) -> RotationSO3;

    fn center(&self) -> Vec3;

    fn transform_point(&self, x: &Vec3) -> Vec3;
}

impl PoseModel for PoseSE3 {
    const HAS_SCALE: bool = false;

    fn to_sim3(&self) -> PoseSim3 {
        PoseSim3::from_se3(self)
    }

    fn from_sim3(p: &PoseSim3) -> Self {
        p.to_se3()
    }

    fn rotation(&self) -> RotationSO3 {
        self.rotation
    }

    fn center(&self) -> Vec3 {
        PoseSE3::center(self)
    }

    fn transform_point(&self, x: &Vec3) -> Vec3 {
        PoseSE3::transform_point(self, x)
    }
}

impl PoseModel for PoseSim3 {
    const HAS_SCALE: bool = true;

    fn to_sim3(&self) -> PoseSim3 {
        *self
    }

    fn from_sim3(p: &PoseSim3) -> Self {
        *p
    }

    fn rotation(&self) -> RotationSO3 {
        self.rotation
    }

    fn center(&self) -> Vec3 {
        PoseSim3::center(self)
    }

    fn transform_point(&self, x: &Vec3) -> Vec3 {
        PoseSim3::transform_point(self, x)
    }
}

/// Geodesic angle between two rotations, `acos((tr(R1ᵀR2) - 1) / 2)`.
pub fn rotation_distance(a: &RotationSO3, b: &RotationSO3) -> f64 {
    // atan2 form stays accurate for small angles, unlike acos of the trace.
    let m = a.matrix().transpose() * b.matrix();
    let s = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
    .norm()
        * 0.5;
    let c = (m.trace() - 1.0) * 0.5;
    s.atan2(c)
}
