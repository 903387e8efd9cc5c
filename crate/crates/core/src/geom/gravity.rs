use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{skew, RotationSO3, UnitVec3};

/// Canonical vertical axis after pre-alignment.
pub const VERTICAL: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

/// Gravity direction measured in the map frame and in the query frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityPrior {
    pub gravity_map: UnitVec3,
    pub gravity_query: UnitVec3,
}

impl GravityPrior {
    pub fn new(gravity_map: UnitVec3, gravity_query: UnitVec3) -> Self {
        Self {
            gravity_map,
            gravity_query,
        }
    }
}

// Rodrigues form of the shortest rotation taking unit `a` onto unit `b`;
// requires a and b not antipodal.
fn minimal_rotation(a: &Vector3<f64>, b: &Vector3<f64>) -> RotationSO3 {
    let k = a.cross(b);
    let c = a.dot(b);
    let kx = skew(&k);
    Rotation3::from_matrix_unchecked(Matrix3::identity() + kx + kx * kx / (1.0 + c))
}

/// Minimal rotation sending `g` to the canonical vertical `(0, 0, -1)`.
///
/// For `g` (numerically) equal to `(0, 0, 1)` the result is the 180° rotation
/// about the x-axis.
pub fn rotation_to_vertical(g: &UnitVec3) -> RotationSO3 {
    let a = g.into_inner();
    if a.dot(&VERTICAL) < -1.0 + 1e-6 {
        let flip = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let a2 = flip * a;
        return minimal_rotation(&a2, &VERTICAL) * flip;
    }
    minimal_rotation(&a, &VERTICAL)
}

/// Returns `(Q_map, Q_query)` with `Q_map g_map = Q_query g_query = (0,0,-1)`.
///
/// If the true rotation satisfies `R g_map = g_query`, then
/// `Q_query R Q_mapᵀ` is a rotation about the z-axis.
pub fn gravity_prealign(g: &GravityPrior) -> (RotationSO3, RotationSO3) {
    (
        rotation_to_vertical(&g.gravity_map),
        rotation_to_vertical(&g.gravity_query),
    )
}

/// Rotation about the canonical vertical by `theta`.
pub fn vertical_rotation(theta: f64) -> RotationSO3 {
    Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::z()), theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::random_unit_vector;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn already_vertical_is_identity() {
        let r = rotation_to_vertical(&Unit::new_unchecked(VERTICAL));
        assert_relative_eq!(r.matrix(), &Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn x_axis_maps_with_ninety_degrees_about_y() {
        let r = rotation_to_vertical(&Vector3::x_axis());
        let expected = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(r.matrix(), expected.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn antipodal_uses_flip() {
        let r = rotation_to_vertical(&Vector3::z_axis());
        assert_relative_eq!(r * Vector3::z(), VERTICAL, epsilon = 1e-12);
        assert_relative_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_gravity_reaches_vertical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let g = random_unit_vector(&mut rng);
            let r = rotation_to_vertical(&g);
            assert!((r * g.into_inner() - VERTICAL).norm() < 1e-12);
            assert!((r.matrix() * r.matrix().transpose() - Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn residual_rotation_is_about_vertical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let g_map = random_unit_vector(&mut rng);
            let r = Rotation3::from_scaled_axis(random_unit_vector(&mut rng).into_inner() * 2.0);
            let g_query = Unit::new_normalize(r * g_map.into_inner());
            let (qm, qq) = gravity_prealign(&GravityPrior::new(g_map, g_query));
            let rp = (qq * r * qm.inverse()).into_inner();
            assert!(rp[(0, 2)].abs() < 1e-10 && rp[(1, 2)].abs() < 1e-10);
            assert!(rp[(2, 0)].abs() < 1e-10 && rp[(2, 1)].abs() < 1e-10);
            assert!((rp[(2, 2)] - 1.0).abs() < 1e-10);
        }
    }
}
