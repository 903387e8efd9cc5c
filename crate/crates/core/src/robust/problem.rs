use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ransac::count_inliers;
use super::{
    ransac, refine_with_reselection, CostKind, Estimator, PoseEstimate, RansacConfig, RefineConfig,
    RobustError,
};
use crate::geom::{
    GravityPrior, Observation2D, PluckerLine, PoseModel, PoseSE3, PoseSim3, RigCalibration, Vec3,
};
use crate::solvers::{
    ray_depth_at_line, solve_gpnp, solve_gpnp_u, solve_grel_linear, solve_p2p_u, solve_p3p,
    solve_p4l_u, solve_p6l_minimal, solve_point_alignment, solve_point_to_line_alignment,
    LineCorr2D, LineCorr3D, PointCorr2D, PointCorr3D, SolverError,
};

/// Pose problems. Single- and multi-camera variants of the 2D problems are
/// distinguished by the rig they are run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    P3P,
    P2PU,
    GP3P,
    GP2PU,
    P6LLinear,
    P6LMinimal,
    P4LU,
    PointAlign { scale_known: bool, vertical: bool },
    LineAlign { scale_known: bool, vertical: bool },
}

/// The kind of correspondence a problem consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataKind {
    Point2D,
    Line2D,
    Point3D,
    Line3D,
}

impl Problem {
    pub fn sample_size(&self) -> usize {
        match self {
            Problem::P3P | Problem::GP3P => 3,
            Problem::P2PU | Problem::GP2PU => 2,
            Problem::P6LLinear => 17,
            Problem::P6LMinimal => 6,
            Problem::P4LU => 4,
            Problem::PointAlign { vertical, .. } => {
                if *vertical {
                    2
                } else {
                    3
                }
            }
            Problem::LineAlign {
                scale_known,
                vertical,
            } => match (scale_known, vertical) {
                (true, false) => 3,
                (false, false) => 4,
                (true, true) => 2,
                (false, true) => 3,
            },
        }
    }

    pub fn needs_gravity(&self) -> bool {
        match self {
            Problem::P2PU | Problem::GP2PU | Problem::P4LU => true,
            Problem::PointAlign { vertical, .. } | Problem::LineAlign { vertical, .. } => *vertical,
            _ => false,
        }
    }

    pub fn data_kind(&self) -> DataKind {
        match self {
            Problem::P3P | Problem::P2PU | Problem::GP3P | Problem::GP2PU => DataKind::Point2D,
            Problem::P6LLinear | Problem::P6LMinimal | Problem::P4LU => DataKind::Line2D,
            Problem::PointAlign { .. } => DataKind::Point3D,
            Problem::LineAlign { .. } => DataKind::Line3D,
        }
    }

    /// True for the privacy-preserving (line target) problems.
    pub fn uses_lines(&self) -> bool {
        matches!(self.data_kind(), DataKind::Line2D | DataKind::Line3D)
    }

    pub fn cost_kind(&self) -> CostKind {
        match self {
            Problem::PointAlign { scale_known, .. } => CostKind::AlignPoint {
                scale_known: *scale_known,
            },
            Problem::LineAlign { scale_known, .. } => CostKind::AlignLine {
                scale_known: *scale_known,
            },
            p if p.data_kind() == DataKind::Point2D => CostKind::Point,
            _ => CostKind::Line,
        }
    }

    /// Parses a method name with its flags, e.g. `("align-line", true, false)`.
    pub fn from_method(name: &str, scale_known: bool, vertical: bool) -> Result<Self, RobustError> {
        let p = match name {
            "p3p" => Problem::P3P,
            "p2p+u" => Problem::P2PU,
            "gpnp" => Problem::GP3P,
            "gpnp+u" => Problem::GP2PU,
            "p6l" => Problem::P6LLinear,
            "p6l-min" => Problem::P6LMinimal,
            "p4l+u" => Problem::P4LU,
            "align" => Problem::PointAlign {
                scale_known,
                vertical,
            },
            "align-line" => Problem::LineAlign {
                scale_known,
                vertical,
            },
            _ => return Err(RobustError::UnknownMethod(name.to_string())),
        };
        Ok(p)
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Problem::P3P => "p3p",
            Problem::P2PU => "p2p+u",
            Problem::GP3P => "gpnp",
            Problem::GP2PU => "gpnp+u",
            Problem::P6LLinear => "p6l",
            Problem::P6LMinimal => "p6l-min",
            Problem::P4LU => "p4l+u",
            Problem::PointAlign { .. } => "align",
            Problem::LineAlign { .. } => "align-line",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::PointAlign {
                scale_known,
                vertical,
            }
            | Problem::LineAlign {
                scale_known,
                vertical,
            } => {
                write!(f, "{}", self.method_name())?;
                if *vertical {
                    write!(f, "+u")?;
                }
                if *scale_known {
                    write!(f, "+s")?;
                }
                Ok(())
            }
            _ => write!(f, "{}", self.method_name()),
        }
    }
}

impl FromStr for Problem {
    type Err = RobustError;

    /// Accepts the display form, e.g. `align-line+u+s`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, rest) = match s.find("+") {
            Some(i) if s.starts_with("align") => (&s[..i], &s[i..]),
            _ => (s, ""),
        };
        let vertical = rest.contains("+u");
        let scale_known = rest.contains("+s");
        Problem::from_method(base, scale_known, vertical)
    }
}

/// Correspondences of a single kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CorrespondenceSet {
    Points2D(Vec<PointCorr2D>),
    Lines2D(Vec<LineCorr2D>),
    Points3D(Vec<PointCorr3D>),
    Lines3D(Vec<LineCorr3D>),
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        match self {
            CorrespondenceSet::Points2D(c) => c.len(),
            CorrespondenceSet::Lines2D(c) => c.len(),
            CorrespondenceSet::Points3D(c) => c.len(),
            CorrespondenceSet::Lines3D(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> DataKind {
        match self {
            CorrespondenceSet::Points2D(_) => DataKind::Point2D,
            CorrespondenceSet::Lines2D(_) => DataKind::Line2D,
            CorrespondenceSet::Points3D(_) => DataKind::Point3D,
            CorrespondenceSet::Lines3D(_) => DataKind::Line3D,
        }
    }

    /// The subset at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        match self {
            CorrespondenceSet::Points2D(c) => CorrespondenceSet::Points2D(pick(c, indices)),
            CorrespondenceSet::Lines2D(c) => CorrespondenceSet::Lines2D(pick(c, indices)),
            CorrespondenceSet::Points3D(c) => CorrespondenceSet::Points3D(pick(c, indices)),
            CorrespondenceSet::Lines3D(c) => CorrespondenceSet::Lines3D(pick(c, indices)),
        }
    }
}

/// Reprojection error of a map point seen by rig camera `camera`.
pub fn point_residual(
    pose: &PoseSE3,
    rig: &RigCalibration,
    camera: usize,
    obs: &Observation2D,
    x: &Vec3,
) -> f64 {
    let Ok(cam) = rig.camera(camera) else {
        return f64::INFINITY;
    };
    point_residual_in(&cam.pose.compose(pose), obs, x)
}

/// [`point_residual`] with the map-to-camera pose already composed.
fn point_residual_in(map_to_cam: &PoseSE3, obs: &Observation2D, x: &Vec3) -> f64 {
    let y = map_to_cam.transform_point(x);
    if y.z <= 0.0 {
        return f64::INFINITY;
    }
    (obs.x - y.x / y.z).hypot(obs.y - y.y / y.z)
}

/// Distance of the observation to the projected map line. The observation
/// ray must meet the line in front of the camera.
pub fn line_residual(
    pose: &PoseSE3,
    rig: &RigCalibration,
    camera: usize,
    obs: &Observation2D,
    l: &PluckerLine,
) -> f64 {
    let Ok(cam) = rig.camera(camera) else {
        return f64::INFINITY;
    };
    line_residual_in(&cam.pose.compose(pose), obs, l)
}

fn line_residual_in(map_to_cam: &PoseSE3, obs: &Observation2D, l: &PluckerLine) -> f64 {
    let in_cam = l.transformed(&PoseSim3::from_se3(map_to_cam));
    let m = in_cam.moment;
    let n = m.x.hypot(m.y);
    if !(n > 0.0) {
        return f64::INFINITY;
    }
    let ray = crate::geom::GeneralizedRay::central(obs);
    if ray_depth_at_line(&ray, &in_cam).is_some_and(|d| d <= 0.0) {
        return f64::INFINITY;
    }
    (obs.homogeneous().dot(&m) / n).abs()
}

/// Map-frame distance between a local point and its map point.
pub fn align_point_residual(pose: &PoseSim3, local: &Vec3, x: &Vec3) -> f64 {
    (pose.inverse().transform_point(local) - x).norm()
}

/// Map-frame distance between a local point and its map line.
pub fn align_line_residual(pose: &PoseSim3, local: &Vec3, l: &PluckerLine) -> f64 {
    l.distance_to_point(&pose.inverse().transform_point(local))
}

/// A [`Problem`] bound to its data.
pub struct ProblemEstimator<'a> {
    pub problem: Problem,
    pub data: &'a CorrespondenceSet,
    pub rig: &'a RigCalibration,
    pub gravity: Option<&'a GravityPrior>,
}

impl<'a> ProblemEstimator<'a> {
    pub fn new(
        problem: Problem,
        data: &'a CorrespondenceSet,
        rig: &'a RigCalibration,
        gravity: Option<&'a GravityPrior>,
    ) -> Result<Self, RobustError> {
        if data.kind() != problem.data_kind() {
            return Err(RobustError::DataKindMismatch {
                problem,
                got: data.kind(),
            });
        }
        if problem.needs_gravity() && gravity.is_none() {
            return Err(RobustError::MissingGravity(problem));
        }
        if matches!(problem, Problem::P3P | Problem::P2PU) && rig.len() != 1 {
            return Err(RobustError::InvalidConfig(
                "single-camera problem run with a multi-camera rig",
            ));
        }
        Ok(Self {
            problem,
            data,
            rig,
            gravity,
        })
    }

    /// Candidate poses for the correspondences at `sample`.
    pub fn solve(&self, sample: &[usize]) -> Result<Vec<PoseSim3>, SolverError> {
        let rigid = |v: Vec<PoseSE3>| v.iter().map(PoseSim3::from_se3).collect::<Vec<_>>();
        let g = self.gravity;
        Ok(match (self.problem, self.data) {
            (Problem::P3P | Problem::P2PU, CorrespondenceSet::Points2D(c)) => {
                // Solve in the camera frame, then move the pose onto the body.
                let cam_inv = self.rig.cameras()[0].pose.inverse();
                let s: Vec<PointCorr2D> = sample.iter().map(|&i| c[i]).collect();
                let set = if self.problem == Problem::P3P {
                    solve_p3p(&s)?
                } else {
                    let gc = g.expect("checked");
                    let cam = &self.rig.cameras()[0].pose;
                    // Query gravity expressed in the camera frame.
                    let gq =
                        nalgebra::Unit::new_normalize(cam.rotation * gc.gravity_query.into_inner());
                    solve_p2p_u(&s, &GravityPrior::new(gc.gravity_map, gq))?
                };
                set.candidates
                    .iter()
                    .map(|p| PoseSim3::from_se3(&cam_inv.compose(p)))
                    .collect()
            }
            (Problem::GP3P, CorrespondenceSet::Points2D(c)) => {
                let s: Vec<PointCorr2D> = sample.iter().map(|&i| c[i]).collect();
                rigid(solve_gpnp(&s, self.rig)?.candidates)
            }
            (Problem::GP2PU, CorrespondenceSet::Points2D(c)) => {
                let s: Vec<PointCorr2D> = sample.iter().map(|&i| c[i]).collect();
                rigid(solve_gpnp_u(&s, self.rig, g.expect("checked"))?.candidates)
            }
            (Problem::P6LLinear, CorrespondenceSet::Lines2D(c)) => {
                let s: Vec<LineCorr2D> = sample.iter().map(|&i| c[i]).collect();
                rigid(solve_grel_linear(&s, self.rig)?.candidates)
            }
            (Problem::P6LMinimal, CorrespondenceSet::Lines2D(c)) => {
                let s: Vec<LineCorr2D> = sample.iter().map(|&i| c[i]).collect();
                rigid(solve_p6l_minimal(&s, self.rig)?.candidates)
            }
            (Problem::P4LU, CorrespondenceSet::Lines2D(c)) => {
                let s: Vec<LineCorr2D> = sample.iter().map(|&i| c[i]).collect();
                rigid(solve_p4l_u(&s, self.rig, g.expect("checked"))?.candidates)
            }
            (
                Problem::PointAlign {
                    scale_known,
                    vertical,
                },
                CorrespondenceSet::Points3D(c),
            ) => {
                let s: Vec<PointCorr3D> = sample.iter().map(|&i| c[i]).collect();
                solve_point_alignment(&s, scale_known, if vertical { g } else { None })?.candidates
            }
            (
                Problem::LineAlign {
                    scale_known,
                    vertical,
                },
                CorrespondenceSet::Lines3D(c),
            ) => {
                let s: Vec<LineCorr3D> = sample.iter().map(|&i| c[i]).collect();
                solve_point_to_line_alignment(&s, scale_known, if vertical { g } else { None })?
                    .candidates
            }
            _ => unreachable!("data kind checked on construction"),
        })
    }

    /// Residual of correspondence `i` under `pose`, in the problem's units.
    pub fn residual_of(&self, pose: &PoseSim3, i: usize) -> f64 {
        data_residual(self.data, self.rig, pose, i)
    }
}

/// Absolute residual of correspondence `i`; `f64::INFINITY` when undefined.
pub fn data_residual(
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    pose: &PoseSim3,
    i: usize,
) -> f64 {
    let r = match data {
        CorrespondenceSet::Points2D(c) => point_residual(
            &pose.to_se3(),
            rig,
            c[i].camera_index,
            &c[i].observation,
            &c[i].target,
        ),
        CorrespondenceSet::Lines2D(c) => line_residual(
            &pose.to_se3(),
            rig,
            c[i].camera_index,
            &c[i].observation,
            &c[i].target,
        ),
        CorrespondenceSet::Points3D(c) => {
            align_point_residual(pose, &c[i].local_point, &c[i].target)
        }
        CorrespondenceSet::Lines3D(c) => align_line_residual(pose, &c[i].local_point, &c[i].target),
    };
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

impl Estimator for ProblemEstimator<'_> {
    type Model = PoseSim3;

    fn sample_size(&self) -> usize {
        self.problem.sample_size()
    }

    fn num_data(&self) -> usize {
        self.data.len()
    }

    fn hypotheses(&self, sample: &[usize]) -> Vec<PoseSim3> {
        self.solve(sample).unwrap_or_default()
    }

    fn residual(&self, model: &PoseSim3, index: usize) -> f64 {
        self.residual_of(model, index)
    }

    fn score(&self, model: &PoseSim3, threshold: f64, at_least: usize) -> Option<(usize, f64)> {
        let n = self.data.len();
        let finite = |r: f64| if r.is_nan() { f64::INFINITY } else { r };
        let pose = model.to_se3();
        let per_camera: Vec<PoseSE3> = self
            .rig
            .cameras()
            .iter()
            .map(|c| c.pose.compose(&pose))
            .collect();
        let cam = |k: usize| per_camera.get(k);
        match self.data {
            CorrespondenceSet::Points2D(c) => count_inliers(
                n,
                |i| {
                    cam(c[i].camera_index).map_or(f64::INFINITY, |p| {
                        finite(point_residual_in(p, &c[i].observation, &c[i].target))
                    })
                },
                threshold,
                at_least,
            ),
            CorrespondenceSet::Lines2D(c) => count_inliers(
                n,
                |i| {
                    cam(c[i].camera_index).map_or(f64::INFINITY, |p| {
                        finite(line_residual_in(p, &c[i].observation, &c[i].target))
                    })
                },
                threshold,
                at_least,
            ),
            _ => count_inliers(n, |i| self.residual_of(model, i), threshold, at_least),
        }
    }
}

/// RANSAC followed by optional refinement on the inliers, repeated while
/// the refined pose changes the inlier set.
pub fn localize(
    problem: Problem,
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    gravity: Option<&GravityPrior>,
    ransac_config: &RansacConfig,
    refine: Option<&RefineConfig>,
) -> Result<PoseEstimate<PoseSim3>, RobustError> {
    let est = ProblemEstimator::new(problem, data, rig, gravity)?;
    let estimate = ransac(&est, ransac_config)?;
    match refine {
        Some(cfg) => refine_with_reselection(
            &estimate,
            data,
            rig,
            problem.cost_kind(),
            problem.sample_size(),
            cfg,
        ),
        None => Ok(estimate),
    }
}

impl<P: PoseModel> PoseEstimate<P> {
    /// The pose as a similarity (scale 1 for rigid poses).
    pub fn sim3(&self) -> PoseSim3 {
        self.pose.to_sim3()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_roundtrip() {
        for p in [
            Problem::P3P,
            Problem::P2PU,
            Problem::GP3P,
            Problem::GP2PU,
            Problem::P6LLinear,
            Problem::P6LMinimal,
            Problem::P4LU,
            Problem::PointAlign {
                scale_known: true,
                vertical: false,
            },
            Problem::LineAlign {
                scale_known: false,
                vertical: true,
            },
            Problem::LineAlign {
                scale_known: true,
                vertical: true,
            },
        ] {
            assert_eq!(p.to_string().parse::<Problem>().unwrap(), p);
        }
        assert!("p7p".parse::<Problem>().is_err());
    }

    #[test]
    fn sample_sizes_match_minimal_problems() {
        assert_eq!(
            Problem::LineAlign {
                scale_known: true,
                vertical: true
            }
            .sample_size(),
            2
        );
        assert_eq!(
            Problem::LineAlign {
                scale_known: false,
                vertical: false
            }
            .sample_size(),
            4
        );
        assert_eq!(
            Problem::PointAlign {
                scale_known: false,
                vertical: true
            }
            .sample_size(),
            2
        );
        assert_eq!(Problem::P6LLinear.sample_size(), 17);
    }
}
