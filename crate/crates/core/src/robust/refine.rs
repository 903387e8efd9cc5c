//! Levenberg-Marquardt refinement over the inliers of an estimate.
//!
//! The pose `x = s R X + t` is updated as `R <- exp([ω]x) R`, `t <- t + δt`
//! and, when the scale is free, `s <- s exp(δσ)`. Residual vectors per
//! correspondence:
//!
//! * `Point`: projection minus observation (2 rows),
//! * `Line`: signed distance to the projected line (1 row),
//! * `AlignPoint`: map-frame offset of the mapped local point (3 rows),
//! * `AlignLine`: `p x v - w` for the mapped local point `p` (3 rows, norm
//!   equal to the point-to-line distance).

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::problem::data_residual;
use super::{CorrespondenceSet, PoseEstimate, RobustError};
use crate::geom::{project_to_rotation, skew, PoseSim3, RigCalibration, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    Point,
    Line,
    AlignPoint { scale_known: bool },
    AlignLine { scale_known: bool },
}

impl CostKind {
    pub fn dof(&self) -> usize {
        match self {
            CostKind::AlignPoint { scale_known: false }
            | CostKind::AlignLine { scale_known: false } => 7,
            _ => 6,
        }
    }

    fn rows(&self) -> usize {
        match self {
            CostKind::Point => 2,
            CostKind::Line => 1,
            _ => 3,
        }
    }

    fn matches(&self, data: &CorrespondenceSet) -> bool {
        matches!(
            (self, data),
            (CostKind::Point, CorrespondenceSet::Points2D(_))
                | (CostKind::Line, CorrespondenceSet::Lines2D(_))
                | (CostKind::AlignPoint { .. }, CorrespondenceSet::Points3D(_))
                | (CostKind::AlignLine { .. }, CorrespondenceSet::Lines3D(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_lm_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// After each run the inliers are selected again over all correspondences
    /// with the refined pose and the run is repeated, at most this many times,
    /// until the inlier set stops changing. Zero refines once.
    #[serde(default)]
    pub reselect_rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_lm_iterations: 100,
            gradient_tolerance: 1e-12,
            step_tolerance: 1e-14,
            initial_damping: 1e-4,
            reselect_rounds: 5,
        }
    }
}

const DAMPING_CAP: f64 = 1e12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Cost before refinement followed by the cost after each accepted step.
    pub cost_history: Vec<f64>,
    pub converged: bool,
    /// The damping cap was hit before any step was accepted; the input pose is kept.
    pub diverged: bool,
    /// Runs repeated after a change of the inlier set; the other fields
    /// describe the last run.
    #[serde(default)]
    pub reselections: usize,
}

type Block = (Vector3<f64>, SMatrix<f64, 3, 7>);

/// Applies the increment `[ω, δt, δσ]` (the last entry only for 7 dof).
pub fn retract(pose: &PoseSim3, delta: &DVector<f64>) -> PoseSim3 {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let r = nalgebra::Rotation3::from_scaled_axis(w) * pose.rotation;
    let r = project_to_rotation(r.matrix());
    let t = pose.translation + Vector3::new(delta[3], delta[4], delta[5]);
    let s = if delta.len() > 6 {
        pose.scale * delta[6].exp()
    } else {
        pose.scale
    };
    PoseSim3::new(s, r, t)
}

fn point_block(
    pose: &PoseSim3,
    rig: &RigCalibration,
    cam: usize,
    obs: (f64, f64),
    x: &Vec3,
) -> Option<Block> {
    let c = rig.camera(cam).ok()?;
    let rc = c.pose.rotation.matrix();
    let rx = pose.rotation * x;
    let y = c.pose.transform_point(&(rx + pose.translation));
    if !(y.z > 0.0) {
        return None;
    }
    let iz = 1.0 / y.z;
    let r = Vector3::new(y.x * iz - obs.0, y.y * iz - obs.1, 0.0);
    let dproj = SMatrix::<f64, 2, 3>::new(iz, 0.0, -y.x * iz * iz, 0.0, iz, -y.y * iz * iz);
    let mut j = SMatrix::<f64, 3, 7>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0)
        .copy_from(&(dproj * rc * (-skew(&rx))));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(dproj * rc));
    Some((r, j))
}

fn line_block(
    pose: &PoseSim3,
    rig: &RigCalibration,
    cam: usize,
    obs: &Vec3,
    l: &crate::geom::PluckerLine,
) -> Option<Block> {
    let c = rig.camera(cam).ok()?;
    let rc = c.pose.rotation.matrix();
    let a = pose.rotation * l.moment;
    let b = pose.rotation * l.direction.into_inner();
    let u = pose.translation + c.pose.rotation.inverse() * c.pose.translation;
    let m = rc * (a + u.cross(&b));
    let n = m.x.hypot(m.y);
    if !(n > 0.0) {
        return None;
    }
    let dot = obs.dot(&m);
    let r = Vector3::new(dot / n, 0.0, 0.0);
    let drdm = obs / n - Vector3::new(m.x, m.y, 0.0) * (dot / (n * n * n));
    let jw = rc * (-skew(&a) - skew(&u) * skew(&b));
    let jt = -rc * skew(&b);
    let mut j = SMatrix::<f64, 3, 7>::zeros();
    j.fixed_view_mut::<1, 3>(0, 0)
        .copy_from(&(drdm.transpose() * jw));
    j.fixed_view_mut::<1, 3>(0, 3)
        .copy_from(&(drdm.transpose() * jt));
    Some((r, j))
}

/// Mapped local point `p = Rᵀ (x̃ - t) / s` and its Jacobian.
fn mapped_local(pose: &PoseSim3, local: &Vec3) -> (Vec3, SMatrix<f64, 3, 7>) {
    let rt: Matrix3<f64> = pose.rotation.matrix().transpose();
    let y = local - pose.translation;
    let is = 1.0 / pose.scale;
    let p = rt * y * is;
    let mut j = SMatrix::<f64, 3, 7>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(rt * skew(&y) * is));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rt * is));
    j.fixed_view_mut::<3, 1>(0, 6).copy_from(&(-p));
    (p, j)
}

fn block(
    kind: CostKind,
    pose: &PoseSim3,
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    i: usize,
) -> Option<Block> {
    match (kind, data) {
        (CostKind::Point, CorrespondenceSet::Points2D(c)) => point_block(
            pose,
            rig,
            c[i].camera_index,
            (c[i].observation.x, c[i].observation.y),
            &c[i].target,
        ),
        (CostKind::Line, CorrespondenceSet::Lines2D(c)) => line_block(
            pose,
            rig,
            c[i].camera_index,
            &c[i].observation.homogeneous(),
            &c[i].target,
        ),
        (CostKind::AlignPoint { .. }, CorrespondenceSet::Points3D(c)) => {
            let (p, j) = mapped_local(pose, &c[i].local_point);
            Some((p - c[i].target, j))
        }
        (CostKind::AlignLine { .. }, CorrespondenceSet::Lines3D(c)) => {
            let (p, j) = mapped_local(pose, &c[i].local_point);
            let l = &c[i].target;
            let v = l.direction.into_inner();
            Some((p.cross(&v) - l.moment, -skew(&v) * j))
        }
        _ => None,
    }
}

/// Stacked residuals and Jacobian over `indices`. `None` if some residual is
/// undefined at `pose` (e.g. a point behind its camera).
pub fn residuals_and_jacobian(
    kind: CostKind,
    pose: &PoseSim3,
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    indices: &[usize],
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let k = kind.rows();
    let dof = kind.dof();
    let mut r = DVector::zeros(k * indices.len());
    let mut j = DMatrix::zeros(k * indices.len(), dof);
    for (row, &i) in indices.iter().enumerate() {
        let (ri, ji) = block(kind, pose, data, rig, i)?;
        for a in 0..k {
            r[row * k + a] = ri[a];
            for b in 0..dof {
                j[(row * k + a, b)] = ji[(a, b)];
            }
        }
    }
    if r.iter().all(|x| x.is_finite()) {
        Some((r, j))
    } else {
        None
    }
}

/// Levenberg-Marquardt on the squared residuals of the inliers of `estimate`.
///
/// Only strictly cost-decreasing steps are accepted. Afterwards inliers whose
/// residual now exceeds the estimate's threshold are dropped from the mask.
pub fn refine_pose(
    estimate: &PoseEstimate<PoseSim3>,
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    kind: CostKind,
    config: &RefineConfig,
) -> Result<PoseEstimate<PoseSim3>, RobustError> {
    if !kind.matches(data) {
        return Err(RobustError::CostKindMismatch(kind, data.kind()));
    }
    if estimate.inlier_mask.len() != data.len() {
        return Err(RobustError::InvalidConfig(
            "inlier mask length differs from the correspondence count",
        ));
    }
    let indices = estimate.inlier_indices();
    let dof = kind.dof();
    let mut pose = estimate.pose;
    if dof == 6 && (kind == CostKind::Point || kind == CostKind::Line) {
        pose.scale = 1.0;
    }
    let mut report = RefineReport::default();
    let Some((mut r, mut j)) = residuals_and_jacobian(kind, &pose, data, rig, &indices) else {
        report.diverged = true;
        return Ok(PoseEstimate {
            refinement: Some(report),
            ..estimate.clone()
        });
    };
    let mut cost = r.norm_squared();
    report.cost_history.push(cost);
    let mut lambda = config.initial_damping;

    'outer: while report.iterations < config.max_lm_iterations {
        report.iterations += 1;
        let g = j.transpose() * &r;
        if g.amax() <= config.gradient_tolerance {
            report.converged = true;
            break;
        }
        let a = j.transpose() * &j;
        let floor = 1e-12 * a.diagonal().amax().max(1e-300);
        loop {
            let mut m = a.clone();
            for d in 0..dof {
                m[(d, d)] += lambda * (a[(d, d)] + floor);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                if lambda > DAMPING_CAP {
                    break 'outer;
                }
                continue;
            };
            let delta = -chol.solve(&g);
            let size = 1.0 + pose.translation.norm();
            if delta.norm() <= config.step_tolerance * size {
                report.converged = true;
                break 'outer;
            }
            let cand = retract(&pose, &delta);
            match residuals_and_jacobian(kind, &cand, data, rig, &indices) {
                Some((rc, jc)) if rc.norm_squared() < cost => {
                    pose = cand;
                    r = rc;
                    j = jc;
                    cost = r.norm_squared();
                    report.accepted_steps += 1;
                    report.cost_history.push(cost);
                    lambda = (lambda * 0.1).max(1e-15);
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > DAMPING_CAP {
                        if report.accepted_steps == 0 {
                            report.diverged = true;
                        } else {
                            report.converged = true;
                        }
                        break 'outer;
                    }
                }
            }
        }
    }

    if report.diverged {
        return Ok(PoseEstimate {
            refinement: Some(report),
            ..estimate.clone()
        });
    }
    let mut mask = estimate.inlier_mask.clone();
    let mut final_cost = 0.0;
    for &i in &indices {
        let res = data_residual(data, rig, &pose, i);
        if res <= estimate.threshold {
            final_cost += res * res;
        } else {
            mask[i] = false;
        }
    }
    let inliers = mask.iter().filter(|&&b| b).count();
    Ok(PoseEstimate {
        pose,
        inlier_ratio: inliers as f64 / mask.len().max(1) as f64,
        inlier_mask: mask,
        iterations_run: estimate.iterations_run,
        final_cost,
        threshold: estimate.threshold,
        refinement: Some(report),
    })
}

/// [`refine_pose`], then up to `config.reselect_rounds` further runs, each on
/// the correspondences within the estimate's threshold under the previous
/// result. Stops when the inlier set is unchanged, would drop below
/// `min_inliers`, or a run diverges.
pub fn refine_with_reselection(
    estimate: &PoseEstimate<PoseSim3>,
    data: &CorrespondenceSet,
    rig: &RigCalibration,
    kind: CostKind,
    min_inliers: usize,
    config: &RefineConfig,
) -> Result<PoseEstimate<PoseSim3>, RobustError> {
    let mut refined = refine_pose(estimate, data, rig, kind, config)?;
    for round in 1..=config.reselect_rounds {
        if refined.refinement.as_ref().is_some_and(|r| r.diverged) {
            break;
        }
        let mask: Vec<bool> = (0..data.len())
            .map(|i| data_residual(data, rig, &refined.pose, i) <= estimate.threshold)
            .collect();
        if mask == refined.inlier_mask || mask.iter().filter(|&&b| b).count() < min_inliers {
            break;
        }
        let next = refine_pose(
            &PoseEstimate {
                inlier_mask: mask,
                ..refined.clone()
            },
            data,
            rig,
            kind,
            config,
        )?;
        if next.refinement.as_ref().is_some_and(|r| r.diverged) {
            break;
        }
        refined = next;
        if let Some(r) = refined.refinement.as_mut() {
            r.reselections = round;
        }
    }
    Ok(refined)
}
