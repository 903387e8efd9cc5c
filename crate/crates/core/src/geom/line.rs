use nalgebra::{Unit, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GeomError, PoseSim3, UnitVec3, Vec3};

/// A 3D line in Plücker coordinates, stored with a unit direction so that
/// `v · w = 0` and `|v| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckerLine {
    pub direction: UnitVec3,
    pub moment: Vec3,
}

const ORTHOGONALITY_TOL: f64 = 1e-10;

impl PluckerLine {
    /// Builds a line from a (not necessarily unit) direction and its moment.
    /// The 6-vector is rescaled so that the direction becomes unit length.
    pub fn new(direction: Vec3, moment: Vec3) -> Result<Self, GeomError> {
        let n = direction.norm();
        if n < 1e-300 || !n.is_finite() {
            return Err(GeomError::ZeroDirection);
        }
        let v = direction / n;
        let w = moment / n;
        let dot = v.dot(&w);
        if dot.abs() > ORTHOGONALITY_TOL * (1.0 + w.norm()) {
            return Err(GeomError::NotOrthogonal(dot));
        }
        Ok(Self {
            direction: Unit::new_unchecked(v),
            moment: w,
        })
    }

    /// The line through `point` with direction `direction`.
    pub fn through_point(point: &Vec3, direction: &UnitVec3) -> Self {
        Self {
            direction: *direction,
            moment: point.cross(direction),
        }
    }

    /// Point of the line closest to the origin, `v x w`.
    pub fn closest_point_to_origin(&self) -> Vec3 {
        self.direction.cross(&self.moment)
    }

    pub fn point_at(&self, alpha: f64) -> Vec3 {
        self.closest_point_to_origin() + self.direction.into_inner() * alpha
    }

    pub fn distance_to_point(&self, x: &Vec3) -> f64 {
        (x.cross(&self.direction) - self.moment).norm()
    }

    /// Signed offset of the orthogonal projection of `x` along the line,
    /// measured from [`Self::closest_point_to_origin`].
    pub fn parameter_of(&self, x: &Vec3) -> f64 {
        self.direction.dot(x)
    }

    /// Image of the line under `x -> s R x + t`.
    pub fn transformed(&self, pose: &PoseSim3) -> Self {
        let dir = pose.rotation * self.direction.into_inner();
        let moment = pose.scale * (pose.rotation * self.moment) + pose.translation.cross(&dir);
        Self {
            direction: Unit::new_unchecked(dir),
            moment,
        }
    }

    /// Reciprocal product `v1·w2 + v2·w1`; zero iff the lines are coplanar.
    pub fn reciprocal_product(&self, other: &PluckerLine) -> f64 {
        self.direction.dot(&other.moment) + other.direction.dot(&self.moment)
    }
}

/// Uniform direction on the unit sphere: three standard normals, renormalized.
/// Draws with norm below 1e-6 are rejected.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> UnitVec3 {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n >= 1e-6 {
            return Unit::new_unchecked(v / n);
        }
    }
}

/// Replaces a 3D point by a line through it with a uniformly random direction.
pub fn lift_point<R: Rng + ?Sized>(point: &Vec3, rng: &mut R) -> PluckerLine {
    let v = random_unit_vector(rng);
    PluckerLine::through_point(point, &v)
}

/// `v x w + alpha v`.
pub fn line_point_at(line: &PluckerLine, alpha: f64) -> Vec3 {
    line.point_at(alpha)
}
