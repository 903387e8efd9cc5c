//! Synthetic scenes, evaluation metrics and parameter sweeps.

mod metrics;
mod minimal;
mod sweep;

pub use metrics::{
    cumulative_histogram, pose_errors, reprojection_stats, CumulativeHistogram, PoseErrors,
};
pub use minimal::{minimal_instance, minimal_instance_with_rotation, MinimalInstance};
pub use sweep::{evaluate, run_sweep, write_sweep_csv, Method, SweepConfig, SweepKind, SweepRow};

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    lift_point, GravityPrior, Intrinsics, Observation2D, PluckerLine, PoseSE3, PoseSim3,
    RigCalibration, RigCamera, Vec3,
};
use crate::robust::CorrespondenceSet;
use crate::solvers::{Corr2D3D, Corr3D3D};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid sweep: {0}")]
    InvalidSweep(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub num_points: usize,
    /// Edge length of the cube the points are drawn from.
    pub scene_extent: f64,
    /// Ring cameras; consecutive groups of `rig_size` form one query body.
    pub num_query_cameras: usize,
    pub rig_size: usize,
    pub camera_ring_radius: f64,
    /// Standard deviation of the image noise in pixels.
    pub pixel_noise_sigma: f64,
    pub outlier_ratio: f64,
    /// Standard deviation of the depth noise in scene units.
    pub depth_noise_sigma: f64,
    pub focal: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_points: 2000,
            scene_extent: 10.0,
            num_query_cameras: 6,
            rig_size: 3,
            camera_ring_radius: 20.0,
            pixel_noise_sigma: 0.0,
            outlier_ratio: 0.0,
            depth_noise_sigma: 0.0,
            focal: 500.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_points == 0 || self.num_query_cameras == 0 || self.rig_size == 0 {
            return Err(SynthError::InvalidConfig("counts must be positive"));
        }
        if self.rig_size > self.num_query_cameras {
            return Err(SynthError::InvalidConfig(
                "rig_size exceeds the number of query cameras",
            ));
        }
        if !(self.scene_extent > 0.0 && self.camera_ring_radius > 0.0 && self.focal > 0.0) {
            return Err(SynthError::InvalidConfig(
                "extent, ring radius and focal must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(SynthError::InvalidConfig(
                "outlier_ratio must lie in [0, 1)",
            ));
        }
        if self.pixel_noise_sigma < 0.0 || self.depth_noise_sigma < 0.0 {
            return Err(SynthError::InvalidConfig(
                "noise levels must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let (w, h) = self.image_size();
        Intrinsics::new(self.focal, self.focal, w * 0.5, h * 0.5)
    }

    /// Image size in pixels; the field of view does not depend on the focal length.
    pub fn image_size(&self) -> (f64, f64) {
        (1.28 * self.focal, 0.96 * self.focal)
    }
}

/// One observation of a map point by a rig camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthObservation {
    pub point: usize,
    pub camera: usize,
    /// Normalized coordinates (noisy) and depth (noisy).
    pub observation: Observation2D,
    pub outlier: bool,
}

/// A query: a rig of consecutive ring cameras sharing one body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthQuery {
    /// Map to body (the pose of the first camera of the group).
    pub body_pose: PoseSE3,
    pub rig: RigCalibration,
    pub gravity: GravityPrior,
    /// Scale of the local reconstruction for unknown-scale problems.
    pub local_scale: f64,
    pub observations: Vec<SynthObservation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub config: SceneConfig,
    pub points: Vec<Vec3>,
    pub lines: Vec<PluckerLine>,
    pub gravity_map: crate::geom::UnitVec3,
    pub queries: Vec<SynthQuery>,
}

/// Uniformly distributed rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3<f64> {
    loop {
        let q = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-6 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q));
            return q.to_rotation_matrix();
        }
    }
}

/// World-to-camera pose of a camera at `center` looking at `target`, with
/// image `y` pointing along `-up`.
fn look_at(center: &Vec3, target: &Vec3, up: &Vec3) -> PoseSE3 {
    let f = (target - center).normalize();
    let right = f.cross(up).normalize();
    let down = f.cross(&right);
    let r = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_rows(&[
        right.transpose(),
        down.transpose(),
        f.transpose(),
    ]));
    PoseSE3::from_center(r, *center)
}

/// Deterministic scene per `config.seed`. Noise samples are drawn whatever
/// the noise level so that scenes differing only in σ share geometry and
/// noise directions.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticInstance, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = random_rotation(&mut rng);
    let half = config.scene_extent * 0.5;
    let points: Vec<Vec3> = (0..config.num_points)
        .map(|_| {
            world
                * Vector3::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                )
        })
        .collect();
    let lines: Vec<PluckerLine> = points.iter().map(|p| lift_point(p, &mut rng)).collect();
    let up = world * Vector3::z();
    let gravity_map = Unit::new_normalize(-up);

    let intr = config.intrinsics();
    let (w, h) = config.image_size();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let n_cams = config.num_query_cameras;
    let cams: Vec<PoseSE3> = (0..n_cams)
        .map(|k| {
            let a = phase + std::f64::consts::TAU * k as f64 / n_cams as f64;
            let c = Vector3::new(a.cos(), a.sin(), 0.0) * config.camera_ring_radius
                + Vector3::new(0.0, 0.0, rng.random_range(0.0..0.2) * config.scene_extent);
            let target = Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            ) * config.scene_extent;
            look_at(&(world * c), &(world * target), &up)
        })
        .collect();

    let n_bodies = n_cams / config.rig_size;
    let mut queries = Vec::with_capacity(n_bodies);
    for b in 0..n_bodies {
        let group = &cams[b * config.rig_size..(b + 1) * config.rig_size];
        let body = group[0];
        let body_inv = body.inverse();
        let rig = RigCalibration::new(
            group
                .iter()
                .map(|p| RigCamera {
                    pose: p.compose(&body_inv),
                    intrinsics: intr,
                })
                .collect(),
        )
        .expect("positive focal");
        let mut observations = Vec::new();
        for (ci, cam) in group.iter().enumerate() {
            for (pi, x) in points.iter().enumerate() {
                let y = cam.transform_point(x);
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                let nd: f64 = rng.sample(StandardNormal);
                if y.z <= 0.1 * config.scene_extent {
                    continue;
                }
                let px = intr.to_pixel(y.x / y.z, y.y / y.z);
                if !(px.x >= 0.0 && px.x < w && px.y >= 0.0 && px.y < h) {
                    continue;
                }
                let noisy = intr.normalize(
                    px.x + nx * config.pixel_noise_sigma,
                    px.y + ny * config.pixel_noise_sigma,
                );
                let depth = (y.z + nd * config.depth_noise_sigma).max(1e-3);
                observations.push(SynthObservation {
                    point: pi,
                    camera: ci,
                    observation: Observation2D::with_depth(noisy.x, noisy.y, depth),
                    outlier: false,
                });
            }
        }
        let n_out = (config.outlier_ratio * observations.len() as f64).round() as usize;
        let chosen =
            rand::seq::index::sample(&mut rng, observations.len(), n_out.min(observations.len()));
        for i in chosen.iter() {
            let o = &mut observations[i];
            let p = intr.normalize(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let depth = o.observation.depth.unwrap_or(1.0);
            o.observation = Observation2D::with_depth(p.x, p.y, depth);
            o.outlier = true;
        }
        let gravity_query = Unit::new_normalize(body.rotation * gravity_map.into_inner());
        queries.push(SynthQuery {
            body_pose: body,
            rig,
            gravity: GravityPrior::new(gravity_map, gravity_query),
            local_scale: rng.random_range(0.5..2.0),
            observations,
        });
    }

    Ok(SyntheticInstance {
        config: *config,
        points,
        lines,
        gravity_map,
        queries,
    })
}

impl SynthQuery {
    /// The query reduced to its camera `camera`, as a single-camera query
    /// whose body frame is that camera.
    pub fn single(&self, camera: usize) -> SynthQuery {
        let cam = self.rig.cameras()[camera];
        SynthQuery {
            body_pose: cam.pose.compose(&self.body_pose),
            rig: RigCalibration::single(cam.intrinsics),
            gravity: GravityPrior::new(
                self.gravity.gravity_map,
                Unit::new_normalize(cam.pose.rotation * self.gravity.gravity_query.into_inner()),
            ),
            local_scale: self.local_scale,
            observations: self
                .observations
                .iter()
                .filter(|o| o.camera == camera)
                .map(|o| SynthObservation { camera: 0, ..*o })
                .collect(),
        }
    }

    /// Body-frame point reconstructed from an observation and its depth.
    pub fn local_point(&self, o: &SynthObservation) -> Vec3 {
        self.rig.cameras()[o.camera]
            .local_point(&o.observation)
            .expect("synthetic observations carry depth")
    }

    /// Truth transform for the 3D-3D problems: `x̃ = s R X + s T`.
    pub fn local_truth(&self, scale_known: bool) -> PoseSim3 {
        let s = if scale_known { 1.0 } else { self.local_scale };
        PoseSim3::new(s, self.body_pose.rotation, self.body_pose.translation * s)
    }

    /// Correspondences of the given kind against the instance's map.
    pub fn correspondences(
        &self,
        inst: &SyntheticInstance,
        kind: crate::robust::DataKind,
        scale_known: bool,
    ) -> CorrespondenceSet {
        use crate::robust::DataKind;
        let s = if scale_known { 1.0 } else { self.local_scale };
        let obs = &self.observations;
        match kind {
            DataKind::Point2D => CorrespondenceSet::Points2D(
                obs.iter()
                    .map(|o| Corr2D3D::new(o.observation, o.camera, inst.points[o.point]))
                    .collect(),
            ),
            DataKind::Line2D => CorrespondenceSet::Lines2D(
                obs.iter()
                    .map(|o| Corr2D3D::new(o.observation, o.camera, inst.lines[o.point]))
                    .collect(),
            ),
            DataKind::Point3D => CorrespondenceSet::Points3D(
                obs.iter()
                    .map(|o| Corr3D3D::new(self.local_point(o) * s, inst.points[o.point]))
                    .collect(),
            ),
            DataKind::Line3D => CorrespondenceSet::Lines3D(
                obs.iter()
                    .map(|o| Corr3D3D::new(self.local_point(o) * s, inst.lines[o.point]))
                    .collect(),
            ),
        }
    }

    pub fn outlier_flags(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.outlier).collect()
    }
}

impl SyntheticInstance {
    /// Keeps a uniformly random `fraction` of the map entries and drops the
    /// observations of the removed ones.
    pub fn retained(&self, fraction: f64, seed: u64) -> SyntheticInstance {
        let n = self.points.len();
        let keep = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, keep).into_vec();
        idx.sort_unstable();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in idx.iter().enumerate() {
            remap[old] = new;
        }
        let queries = self
            .queries
            .iter()
            .map(|q| SynthQuery {
                observations: q
                    .observations
                    .iter()
                    .filter(|o| remap[o.point] != usize::MAX)
                    .map(|o| SynthObservation {
                        point: remap[o.point],
                        ..*o
                    })
                    .collect(),
                ..q.clone()
            })
            .collect();
        SyntheticInstance {
            config: self.config,
            points: idx.iter().map(|&i| self.points[i]).collect(),
            lines: idx.iter().map(|&i| self.lines[i]).collect(),
            gravity_map: self.gravity_map,
            queries,
        }
    }
}
