use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;

use super::random_rotation;
use crate::geom::{
    lift_point, GravityPrior, Intrinsics, Observation2D, PoseSE3, PoseSim3, RigCalibration,
    RigCamera, Vec3,
};
use crate::robust::{CorrespondenceSet, DataKind, Problem};
use crate::solvers::{Corr2D3D, Corr3D3D};

/// A consistent, noiseless sample of exactly the minimal size of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalInstance {
    pub problem: Problem,
    pub data: CorrespondenceSet,
    pub rig: RigCalibration,
    pub gravity: Option<GravityPrior>,
    pub truth: PoseSim3,
    /// Bounding-box diagonal of the sampled map points.
    pub extent: f64,
}

fn random_rig<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RigCalibration {
    let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0);
    let cams = (0..n)
        .map(|i| {
            if i == 0 {
                return RigCamera {
                    pose: PoseSE3::identity(),
                    intrinsics: k,
                };
            }
            let r = Rotation3::from_scaled_axis(Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
            ));
            let c = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            RigCamera {
                pose: PoseSE3::from_center(r, c),
                intrinsics: k,
            }
        })
        .collect();
    RigCalibration::new(cams).expect("unit focal")
}

/// Samples a noiseless minimal instance. The 2D line problems use a rig of
/// three cameras when `multi` is set; the generalized point problems always
/// do and `P3P`/`P2PU` never do.
pub fn minimal_instance<R: Rng + ?Sized>(
    problem: Problem,
    multi: bool,
    rng: &mut R,
) -> MinimalInstance {
    minimal_instance_with_rotation(problem, multi, None, rng)
}

/// As [`minimal_instance`] with a prescribed map-to-query rotation and map
/// gravity direction.
pub fn minimal_instance_with_rotation<R: Rng + ?Sized>(
    problem: Problem,
    multi: bool,
    fixed: Option<(Rotation3<f64>, Unit<Vector3<f64>>)>,
    rng: &mut R,
) -> MinimalInstance {
    let n = problem.sample_size();
    let uses_rig = match problem {
        Problem::P3P | Problem::P2PU => false,
        Problem::GP3P | Problem::GP2PU => true,
        Problem::P6LLinear | Problem::P6LMinimal | Problem::P4LU => multi,
        Problem::PointAlign { .. } | Problem::LineAlign { .. } => false,
    };
    let rig = if uses_rig {
        random_rig(rng, 3)
    } else {
        random_rig(rng, 1)
    };
    let rotation = match fixed {
        Some((r, _)) => r,
        None => random_rotation(rng),
    };
    let translation = Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    let body = PoseSE3::new(rotation, translation);
    let body_inv = body.inverse();

    let mut obs = Vec::with_capacity(n);
    for i in 0..n {
        let cam_index = i % rig.len();
        let cam = &rig.cameras()[cam_index];
        let (x, y) = (rng.random_range(-0.6..0.6), rng.random_range(-0.45..0.45));
        let depth = rng.random_range(2.0..8.0);
        let in_cam = Vector3::new(x, y, 1.0) * depth;
        let in_body = cam.pose.inverse().transform_point(&in_cam);
        obs.push((
            Observation2D::with_depth(x, y, depth),
            cam_index,
            in_body,
            body_inv.transform_point(&in_body),
        ));
    }
    let map_points: Vec<Vec3> = obs.iter().map(|o| o.3).collect();
    let lines: Vec<_> = map_points.iter().map(|p| lift_point(p, rng)).collect();

    let g_map = match fixed {
        Some((_, g)) => g,
        None => crate::geom::random_unit_vector(rng),
    };
    let gravity = GravityPrior::new(g_map, Unit::new_normalize(rotation * g_map.into_inner()));

    let s = match problem {
        Problem::PointAlign {
            scale_known: false, ..
        }
        | Problem::LineAlign {
            scale_known: false, ..
        } => rng.random_range(0.5..2.0),
        _ => 1.0,
    };
    let data = match problem.data_kind() {
        DataKind::Point2D => {
            CorrespondenceSet::Points2D(obs.iter().map(|o| Corr2D3D::new(o.0, o.1, o.3)).collect())
        }
        DataKind::Line2D => CorrespondenceSet::Lines2D(
            obs.iter()
                .zip(&lines)
                .map(|(o, l)| Corr2D3D::new(o.0, o.1, *l))
                .collect(),
        ),
        DataKind::Point3D => {
            CorrespondenceSet::Points3D(obs.iter().map(|o| Corr3D3D::new(o.2 * s, o.3)).collect())
        }
        DataKind::Line3D => CorrespondenceSet::Lines3D(
            obs.iter()
                .zip(&lines)
                .map(|(o, l)| Corr3D3D::new(o.2 * s, *l))
                .collect(),
        ),
    };

    let (lo, hi) = map_points.iter().fold(
        (
            Vector3::repeat(f64::INFINITY),
            Vector3::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    MinimalInstance {
        problem,
        data,
        rig,
        gravity: problem.needs_gravity().then_some(gravity),
        truth: PoseSim3::new(s, rotation, translation * s),
        extent: (hi - lo).norm().max(1.0),
    }
}
