use serde::{Deserialize, Serialize};

use super::{SynthQuery, SyntheticInstance};
use crate::geom::{point_line_residual, point_point_residual, project_line, PoseModel, PoseSE3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    /// Rotation error in radians.
    pub dr: f64,
    /// Distance between the estimated and true camera centers.
    pub dt: f64,
    /// Mean point-to-point reprojection error in pixels, when evaluated.
    pub mean_point_px: Option<f64>,
    /// Mean point-to-line reprojection error in pixels, when evaluated.
    pub mean_line_px: Option<f64>,
}

/// `ΔR = arccos((tr(RᵀR̂) - 1) / 2)` and `ΔT = |c - ĉ|` with `c = -Rᵀ T`.
pub fn pose_errors<P: PoseModel>(estimate: &P, truth: &P) -> PoseErrors {
    let r = truth.rotation();
    let rh = estimate.rotation();
    let tr = (r.matrix().transpose() * rh.matrix()).trace();
    PoseErrors {
        dr: ((tr - 1.0) * 0.5).clamp(-1.0, 1.0).acos(),
        dt: (truth.center() - estimate.center()).norm(),
        mean_point_px: None,
        mean_line_px: None,
    }
}

/// Mean point-to-point and point-to-line reprojection errors (pixels) of the
/// inlier observations of `query` under the body pose `pose`.
pub fn reprojection_stats(
    pose: &PoseSE3,
    query: &SynthQuery,
    inst: &SyntheticInstance,
) -> (f64, f64) {
    let (mut sp, mut sl, mut n) = (0.0, 0.0, 0usize);
    for o in query.observations.iter().filter(|o| !o.outlier) {
        let cam = &query.rig.cameras()[o.camera];
        let p = cam.pose.compose(pose);
        let (Ok(rp), Ok(l)) = (
            point_point_residual(&o.observation, &p, &inst.points[o.point]),
            project_line(&p, &inst.lines[o.point]),
        ) else {
            continue;
        };
        let Ok(rl) = point_line_residual(&o.observation, &l) else {
            continue;
        };
        let f = cam.intrinsics.mean_focal();
        sp += rp * f;
        sl += rl.abs() * f;
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    (sp / n as f64, sl / n as f64)
}

/// Recall (fraction of errors at or below each edge) for rotation and
/// translation errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeHistogram {
    pub rotation_edges_deg: Vec<f64>,
    pub rotation_recall: Vec<f64>,
    pub translation_edges: Vec<f64>,
    pub translation_recall: Vec<f64>,
}

pub fn cumulative_histogram(
    errors: &[PoseErrors],
    rotation_edges_deg: &[f64],
    translation_edges: &[f64],
) -> CumulativeHistogram {
    let mut dr: Vec<f64> = errors.iter().map(|e| e.dr.to_degrees()).collect();
    let mut dt: Vec<f64> = errors.iter().map(|e| e.dt).collect();
    dr.sort_by(f64::total_cmp);
    dt.sort_by(f64::total_cmp);
    let recall = |sorted: &[f64], edges: &[f64]| -> Vec<f64> {
        edges
            .iter()
            .map(|e| {
                if sorted.is_empty() {
                    0.0
                } else {
                    sorted.partition_point(|x| x <= e) as f64 / sorted.len() as f64
                }
            })
            .collect()
    };
    CumulativeHistogram {
        rotation_recall: recall(&dr, rotation_edges_deg),
        rotation_edges_deg: rotation_edges_deg.to_vec(),
        translation_recall: recall(&dt, translation_edges),
        translation_edges: translation_edges.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vertical_rotation, PoseSE3};
    use nalgebra::Vector3;

    fn err(dr_deg: f64) -> PoseErrors {
        PoseErrors {
            dr: dr_deg.to_radians(),
            dt: 0.0,
            mean_point_px: None,
            mean_line_px: None,
        }
    }

    #[test]
    fn identical_poses_have_zero_error() {
        let p = PoseSE3::new(vertical_rotation(0.4), Vector3::new(1.0, 2.0, 3.0));
        let e = pose_errors(&p, &p);
        assert!(e.dr < 1e-7);
        assert_eq!(e.dt, 0.0);
    }

    #[test]
    fn ten_degrees_about_z_same_center() {
        let truth = PoseSE3::from_center(vertical_rotation(0.0), Vector3::new(1.0, -1.0, 2.0));
        let est = PoseSE3::from_center(
            vertical_rotation(10f64.to_radians()),
            Vector3::new(1.0, -1.0, 2.0),
        );
        let e = pose_errors(&est, &truth);
        assert!((e.dr - 10f64.to_radians()).abs() < 1e-12);
        assert!(e.dt < 1e-12);
    }

    #[test]
    fn histogram_examples() {
        let h = cumulative_histogram(&[err(0.0), err(0.0)], &[0.1, 1.0], &[0.5]);
        assert_eq!(h.rotation_recall, vec![1.0, 1.0]);
        assert_eq!(h.translation_recall, vec![1.0]);
        let h = cumulative_histogram(&[err(0.5)], &[0.1, 1.0], &[]);
        assert_eq!(h.rotation_recall, vec![0.0, 1.0]);
    }
}
