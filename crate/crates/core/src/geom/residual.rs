use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    skew, GeneralizedRay, GeomError, Observation2D, PluckerLine, PoseModel, PoseSE3, Vec3,
};

/// Homogeneous image line `l1 x + l2 y + l3 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedLine2D {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl ProjectedLine2D {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Self {
        Self { l1, l2, l3 }
    }

    pub fn as_vector(&self) -> Vec3 {
        Vector3::new(self.l1, self.l2, self.l3)
    }

    /// Equality up to a nonzero scale factor.
    pub fn same_line(&self, other: &ProjectedLine2D, tol: f64) -> bool {
        let a = self.as_vector();
        let b = other.as_vector();
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            return false;
        }
        (a / na).cross(&(b / nb)).norm() <= tol
    }
}

/// The 4x4 Plücker matrix `[[-[w]x, -v], [vᵀ, 0]]`.
fn plucker_matrix(line: &PluckerLine) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-skew(&line.moment)));
    m.fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&(-line.direction.into_inner()));
    m.fixed_view_mut::<1, 3>(3, 0)
        .copy_from(&line.direction.transpose());
    m
}

/// Projects a 3D line into the normalized image plane of camera `pose`
/// through the congruence `[l]x = P [L]x Pᵀ`.
pub fn project_line(pose: &PoseSE3, line: &PluckerLine) -> Result<ProjectedLine2D, GeomError> {
    let p = pose.matrix3x4();
    let m = p * plucker_matrix(line) * p.transpose();
    let l = Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
    // |l| is the distance from the camera center to the line.
    let scale = 1.0_f64.max(line.moment.norm()).max(pose.translation.norm());
    if l.norm() <= 1e-12 * scale {
        return Err(GeomError::DegenerateProjection);
    }
    Ok(ProjectedLine2D::new(l.x, l.y, l.z))
}

/// Signed distance of `x` to the image line `l`, in normalized coordinates.
pub fn point_line_residual(x: &Observation2D, l: &ProjectedLine2D) -> Result<f64, GeomError> {
    let n = l.l1.hypot(l.l2);
    if n == 0.0 {
        return Err(GeomError::DegenerateLine);
    }
    Ok(x.homogeneous().dot(&l.as_vector()) / n)
}

/// Reprojection error of map point `X` under `pose`.
pub fn point_point_residual(
    x: &Observation2D,
    pose: &PoseSE3,
    point: &Vec3,
) -> Result<f64, GeomError> {
    let y = pose.transform_point(point);
    if y.z <= 0.0 {
        return Err(GeomError::BehindCamera(y.z));
    }
    Ok((x.x - y.x / y.z).hypot(x.y - y.y / y.z))
}

/// Reciprocal product between a body-frame ray mapped into the map frame and
/// a map line. Vanishes exactly when the two lines meet.
pub fn ray_line_incidence<P: PoseModel>(pose: &P, ray: &GeneralizedRay, line: &PluckerLine) -> f64 {
    let sim = pose.to_sim3();
    let r_t = sim.rotation.inverse();
    let d_m = r_t * ray.direction.into_inner();
    let c_m = r_t * (ray.origin - sim.translation) / sim.scale;
    d_m.dot(&line.moment) + line.direction.dot(&c_m.cross(&d_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{lift_point, PoseSim3};
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> PoseSE3 {
        PoseSE3::new(
            Rotation3::from_euler_angles(
                rng.random::<f64>() * 0.6,
                rng.random::<f64>() * 0.6,
                rng.random::<f64>() * 6.0,
            ),
            Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() * 2.0,
            ),
        )
    }

    #[test]
    fn identity_projection_example() {
        let line = PluckerLine::through_point(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x_axis());
        assert_eq!(line.moment, Vector3::new(0.0, 1.0, 0.0));
        let l = project_line(&PoseSE3::identity(), &line).unwrap();
        assert!(l.same_line(&ProjectedLine2D::new(0.0, 1.0, 0.0), 1e-15));
        assert_eq!(
            point_line_residual(&Observation2D::new(0.0, 0.0), &l).unwrap(),
            0.0
        );
    }

    #[test]
    fn line_through_center_is_degenerate() {
        let line = PluckerLine::through_point(
            &Vector3::zeros(),
            &Unit::new_normalize(Vector3::new(1.0, 2.0, 3.0)),
        );
        assert_eq!(
            project_line(&PoseSE3::identity(), &line),
            Err(GeomError::DegenerateProjection)
        );
    }

    #[test]
    fn residual_examples() {
        let l = ProjectedLine2D::new(0.0, 1.0, 0.0);
        assert_eq!(
            point_line_residual(&Observation2D::new(0.0, 0.0), &l).unwrap(),
            0.0
        );
        assert_eq!(
            point_line_residual(&Observation2D::new(0.0, 1.0), &l).unwrap(),
            1.0
        );
        assert_eq!(
            point_line_residual(
                &Observation2D::new(0.0, 1.0),
                &ProjectedLine2D::new(0.0, 0.0, 1.0)
            ),
            Err(GeomError::DegenerateLine)
        );
        let id = PoseSE3::identity();
        let z = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(
            point_point_residual(&Observation2D::new(0.0, 0.0), &id, &z).unwrap(),
            0.0
        );
        assert!(
            (point_point_residual(&Observation2D::new(0.1, 0.0), &id, &z).unwrap() - 0.1).abs()
                < 1e-15
        );
        assert!(matches!(
            point_point_residual(&Observation2D::new(0.0, 0.0), &id, &(-z)),
            Err(GeomError::BehindCamera(_))
        ));
    }

    #[test]
    fn sampled_line_points_project_onto_image_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pose = random_pose(&mut rng);
        let x = pose
            .inverse()
            .transform_point(&Vector3::new(0.2, -0.3, 5.0));
        let line = lift_point(&x, &mut rng);
        let l = project_line(&pose, &line).unwrap();
        let mut tested = 0;
        for k in -5..5 {
            let y = pose.transform_point(&line.point_at(k as f64 * 0.7));
            if y.z <= 0.0 {
                continue;
            }
            let obs = Observation2D::new(y.x / y.z, y.y / y.z);
            assert!(point_line_residual(&obs, &l).unwrap().abs() < 1e-9);
            tested += 1;
        }
        assert!(tested > 3);
    }

    #[test]
    fn incidence_at_truth_and_after_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pose = PoseSim3::from_se3(&random_pose(&mut rng));
        let x = Vector3::new(1.0, 2.0, 6.0);
        let line = lift_point(&x, &mut rng);
        let y = pose.transform_point(&x);
        let ray = GeneralizedRay::new(Vector3::zeros(), Unit::new_normalize(y));
        assert!(ray_line_incidence(&pose, &ray, &line).abs() < 1e-10);

        let mut shifted = pose;
        shifted.translation += Unit::new_normalize(Vector3::new(0.3, -0.8, 0.5)).into_inner() * 0.1;
        assert!(ray_line_incidence(&shifted, &ray, &line).abs() > 1e-6);

        // The ray's own line, mapped into the map frame.
        let inv = pose.inverse();
        let own = PluckerLine::through_point(
            &inv.transform_point(&ray.origin),
            &Unit::new_normalize(inv.rotation * ray.direction.into_inner()),
        );
        assert!(ray_line_incidence(&pose, &ray, &own).abs() < 1e-12);
    }
}
