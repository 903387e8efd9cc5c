use nalgebra::{Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeomError, PoseSE3, UnitVec3, Vec3};

/// An image observation in normalized coordinates, with optional depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation2D {
    pub x: f64,
    pub y: f64,
    pub depth: Option<f64>,
}

impl Observation2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, depth: None }
    }

    pub fn with_depth(x: f64, y: f64, depth: f64) -> Self {
        debug_assert!(depth.is_finite() && depth > 0.0);
        Self {
            x,
            y,
            depth: Some(depth),
        }
    }

    /// Homogeneous image point `(x, y, 1)`.
    pub fn homogeneous(&self) -> Vec3 {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn bearing(&self) -> UnitVec3 {
        Unit::new_normalize(self.homogeneous())
    }

    /// Local 3D point `λ (x, y, 1)` in the camera frame, when depth is known.
    pub fn local_point(&self) -> Option<Vec3> {
        self.depth.map(|d| self.homogeneous() * d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn normalize(&self, u: f64, v: f64) -> Vector2<f64> {
        Vector2::new((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    pub fn to_pixel(&self, x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x * self.fx + self.cx, y * self.fy + self.cy)
    }

    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }
}

/// A viewing ray of a (possibly generalized) camera, expressed in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedRay {
    pub origin: Vec3,
    pub direction: UnitVec3,
}

impl GeneralizedRay {
    pub fn new(origin: Vec3, direction: UnitVec3) -> Self {
        Self { origin, direction }
    }

    /// Ray of a single pinhole camera at the origin.
    pub fn central(obs: &Observation2D) -> Self {
        Self::new(Vector3::zeros(), obs.bearing())
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction.into_inner() * t
    }

    /// Plücker moment of the ray line, `c x d`.
    pub fn moment(&self) -> Vec3 {
        self.origin.cross(&self.direction)
    }
}

/// One camera of a rig: extrinsic (body to camera) and intrinsic calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub pose: PoseSE3,
    pub intrinsics: Intrinsics,
}

impl RigCamera {
    /// Camera center in the body frame.
    pub fn center(&self) -> Vec3 {
        self.pose.center()
    }

    /// Body-frame generalized ray for a normalized observation in this camera.
    pub fn ray(&self, obs: &Observation2D) -> GeneralizedRay {
        let r_t = self.pose.rotation.inverse();
        GeneralizedRay::new(self.center(), Unit::new_normalize(r_t * obs.homogeneous()))
    }

    /// Body-frame point for an observation with depth.
    pub fn local_point(&self, obs: &Observation2D) -> Option<Vec3> {
        obs.local_point()
            .map(|p| self.pose.inverse().transform_point(&p))
    }
}

/// Calibrated multi-camera rig. A single camera is a rig with one identity camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigCalibration {
    cameras: Vec<RigCamera>,
}

impl RigCalibration {
    pub fn new(cameras: Vec<RigCamera>) -> Result<Self, GeomError> {
        if cameras.is_empty() {
            return Err(GeomError::InvalidRig("rig has no cameras".into()));
        }
        for (i, c) in cameras.iter().enumerate() {
            let k = &c.intrinsics;
            if !(k.fx > 0.0 && k.fy > 0.0) || !k.fx.is_finite() || !k.fy.is_finite() {
                return Err(GeomError::InvalidRig(format!(
                    "camera {i} has non-positive focal length"
                )));
            }
        }
        Ok(Self { cameras })
    }

    pub fn single(intrinsics: Intrinsics) -> Self {
        Self {
            cameras: vec![RigCamera {
                pose: PoseSE3::identity(),
                intrinsics,
            }],
        }
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, index: usize) -> Result<&RigCamera, GeomError> {
        self.cameras.get(index).ok_or(GeomError::CameraIndex {
            index,
            len: self.cameras.len(),
        })
    }

    pub fn ray(&self, index: usize, obs: &Observation2D) -> Result<GeneralizedRay, GeomError> {
        Ok(self.camera(index)?.ray(obs))
    }

    /// True when all camera centers coincide with the body origin.
    pub fn is_central(&self) -> bool {
        self.cameras.iter().all(|c| c.center().norm() < 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    #[test]
    fn rig_ray_passes_through_observed_point() {
        let cam = RigCamera {
            pose: PoseSE3::new(
                Rotation3::from_euler_angles(0.1, 0.4, -0.3),
                Vector3::new(0.2, -0.1, 0.05),
            ),
            intrinsics: Intrinsics::new(500.0, 500.0, 320.0, 240.0),
        };
        let x_body = Vector3::new(0.3, -0.2, 4.0);
        let x_cam = cam.pose.transform_point(&x_body);
        let obs = Observation2D::with_depth(x_cam.x / x_cam.z, x_cam.y / x_cam.z, x_cam.z);
        let ray = cam.ray(&obs);
        let t = (x_body - ray.origin).dot(&ray.direction);
        assert_relative_eq!(ray.point_at(t), x_body, epsilon = 1e-12);
        assert_relative_eq!(cam.local_point(&obs).unwrap(), x_body, epsilon = 1e-12);
    }

    #[test]
    fn rig_validation() {
        assert!(RigCalibration::new(vec![]).is_err());
        let bad = RigCamera {
            pose: PoseSE3::identity(),
            intrinsics: Intrinsics::new(0.0, 500.0, 0.0, 0.0),
        };
        assert!(RigCalibration::new(vec![bad]).is_err());
        let rig = RigCalibration::single(Intrinsics::new(500.0, 500.0, 0.0, 0.0));
        assert!(rig.is_central());
        assert_eq!(
            rig.camera(3).unwrap_err(),
            GeomError::CameraIndex { index: 3, len: 1 }
        );
    }

    #[test]
    fn pixel_roundtrip() {
        let k = Intrinsics::new(480.0, 520.0, 300.0, 200.0);
        let n = k.normalize(123.0, 456.0);
        assert_relative_eq!(
            k.to_pixel(n.x, n.y),
            Vector2::new(123.0, 456.0),
            epsilon = 1e-12
        );
    }
}
