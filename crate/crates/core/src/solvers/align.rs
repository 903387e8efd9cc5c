use nalgebra::{Matrix3, Vector3};

use super::{check_size, spread, PointCorr3D, SolutionSet, SolverDiagnostics, SolverError};
use crate::geom::{
    gravity_prealign, vertical_rotation, GravityPrior, PoseSim3, Vec3, SVD_MAX_ITER,
};

/// Least-squares similarity (or rigid, when `with_scale` is false) with
/// `dst ≈ s R src + t`, reflection excluded.
pub(crate) fn umeyama(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> PoseSim3 {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vec3>() / n;
    let md = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    let mut var = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let a0 = a - ms;
        h += (b - md) * a0.transpose();
        var += a0.norm_squared();
    }
    // Non-convergence only happens on non-finite input; the identity then
    // yields a hypothesis that scoring rejects.
    let Some(svd) = h.try_svd(true, true, f64::EPSILON, SVD_MAX_ITER) else {
        return PoseSim3::identity();
    };
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d.z = -1.0;
    }
    let r = nalgebra::Rotation3::from_matrix_unchecked(u * Matrix3::from_diagonal(&d) * v_t);
    let s = if with_scale && var > 0.0 {
        svd.singular_values.dot(&d) / var
    } else {
        1.0
    };
    PoseSim3::new(s, r, md - s * (r * ms))
}

/// Ratio of the second to the first singular value of the centered point set;
/// near zero for collinear configurations.
pub(crate) fn planarity(points: &[Vec3]) -> f64 {
    let n = points.len() as f64;
    let m = points.iter().sum::<Vec3>() / n;
    let mut c = Matrix3::zeros();
    for p in points {
        let d = p - m;
        c += d * d.transpose();
    }
    let Some(eig) = nalgebra::SymmetricEigen::try_new(c, f64::EPSILON, SVD_MAX_ITER) else {
        return 0.0;
    };
    let sv = eig.eigenvalues;
    let mut s: Vec<f64> = sv.iter().map(|x| x.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if s[0] == 0.0 {
        0.0
    } else {
        s[1] / s[0]
    }
}

/// 3D-3D point alignment, `local = s R map + t`.
///
/// Without gravity at least 3 non-collinear pairs are required; with a
/// gravity prior the rotation is restricted to the vertical axis and 2
/// pairs with horizontal separation suffice. With `scale_known` the scale
/// is pinned to 1. The result is a single least-squares estimate; its
/// largest residual (relative to the spread of the local points) is
/// reported in the diagnostics.
pub fn solve_point_alignment(
    corrs: &[PointCorr3D],
    scale_known: bool,
    gravity: Option<&GravityPrior>,
) -> Result<SolutionSet<PoseSim3>, SolverError> {
    check_size(corrs.len(), if gravity.is_some() { 2 } else { 3 })?;
    let src: Vec<Vec3> = corrs.iter().map(|c| c.target).collect();
    let dst: Vec<Vec3> = corrs.iter().map(|c| c.local_point).collect();

    let (pose, condition) = match gravity {
        None => {
            let cond = planarity(&src);
            if cond < 1e-9 {
                return Err(SolverError::DegenerateSample("collinear map points"));
            }
            (umeyama(&src, &dst, !scale_known), cond)
        }
        Some(g) => vertical_alignment(&src, &dst, scale_known, g)?,
    };

    let sd = spread(dst.iter().copied());
    let max_residual = src
        .iter()
        .zip(&dst)
        .map(|(x, y)| (pose.transform_point(x) - y).norm() / sd)
        .fold(0.0, f64::max);
    Ok(SolutionSet {
        candidates: vec![pose],
        diagnostics: SolverDiagnostics {
            max_residual,
            condition,
            ..Default::default()
        },
    })
}

fn vertical_alignment(
    src: &[Vec3],
    dst: &[Vec3],
    scale_known: bool,
    g: &GravityPrior,
) -> Result<(PoseSim3, f64), SolverError> {
    let (qm, qq) = gravity_prealign(g);
    let a: Vec<Vec3> = src.iter().map(|x| qm * x).collect();
    let b: Vec<Vec3> = dst.iter().map(|x| qq * x).collect();
    let n = a.len() as f64;
    let ma = a.iter().sum::<Vec3>() / n;
    let mb = b.iter().sum::<Vec3>() / n;
    let (mut sin, mut cos, mut horiz, mut total) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let x0 = x - ma;
        let y0 = y - mb;
        cos += x0.x * y0.x + x0.y * y0.y;
        sin += x0.x * y0.y - x0.y * y0.x;
        horiz += x0.x * x0.x + x0.y * x0.y;
        total += x0.norm_squared();
    }
    if total == 0.0 || horiz <= 1e-18 * total {
        return Err(SolverError::DegenerateSample(
            "map points separated only vertically",
        ));
    }
    let rz = vertical_rotation(sin.atan2(cos));
    let s = if scale_known {
        1.0
    } else {
        let num: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (y - mb).dot(&(rz * (x - ma))))
            .sum();
        if num <= 0.0 {
            return Err(SolverError::DegenerateSample("non-positive scale"));
        }
        num / total
    };
    let t = mb - s * (rz * ma);
    let r = qq.inverse() * rz * qm;
    Ok((
        PoseSim3::new(s, r, qq.inverse() * t),
        (horiz / total).sqrt(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{random_unit_vector, rotation_distance};
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corrs(pose: &PoseSim3, pts: &[Vec3]) -> Vec<PointCorr3D> {
        pts.iter()
            .map(|p| PointCorr3D::new(pose.transform_point(p), *p))
            .collect()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vector3::new(rng.random::<f64>(), rng.random(), rng.random()) * 10.0
                    - Vector3::repeat(5.0)
            })
            .collect()
    }

    #[test]
    fn identity_mapping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 3);
        let sol = solve_point_alignment(&corrs(&PoseSim3::identity(), &pts), false, None).unwrap();
        let p = sol.candidates[0];
        assert!((p.scale - 1.0).abs() < 1e-12);
        assert!(rotation_distance(&p.rotation, &Rotation3::identity()) < 1e-9);
        assert!(p.translation.norm() < 1e-9);
    }

    #[test]
    fn recovers_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let truth = PoseSim3::new(
                2.0,
                Rotation3::from_scaled_axis(random_unit_vector(&mut rng).into_inner() * 2.5),
                Vector3::new(1.0, -3.0, 2.0),
            );
            let pts = random_points(&mut rng, 3);
            let p = solve_point_alignment(&corrs(&truth, &pts), false, None)
                .unwrap()
                .candidates[0];
            assert!((p.scale - 2.0).abs() < 1e-9);
            let e = rotation_distance(&p.rotation, &truth.rotation);
            assert!(e < 1e-9, "{e}");
            assert!((p.translation - truth.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn known_scale_does_not_absorb_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = PoseSim3::new(1.5, Rotation3::identity(), Vector3::zeros());
        let pts = random_points(&mut rng, 5);
        let sol = solve_point_alignment(&corrs(&truth, &pts), true, None).unwrap();
        assert_eq!(sol.candidates[0].scale, 1.0);
        assert!(sol.diagnostics.max_residual > 1e-3);
    }

    #[test]
    fn known_scale_matches_similarity_on_unit_scale_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = PoseSim3::new(
            1.0,
            Rotation3::from_scaled_axis(Vector3::new(0.3, -1.0, 0.4)),
            Vector3::new(0.5, 0.2, -0.1),
        );
        let pts = random_points(&mut rng, 6);
        let c = corrs(&truth, &pts);
        let a = solve_point_alignment(&c, true, None).unwrap().candidates[0];
        let b = solve_point_alignment(&c, false, None).unwrap().candidates[0];
        assert!((b.scale - 1.0).abs() < 1e-9);
        assert!(rotation_distance(&a.rotation, &b.rotation) < 1e-9);
        assert!((a.translation - b.translation).norm() < 1e-9);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = vec![Vector3::zeros(), Vector3::x(), Vector3::x() * 2.0];
        assert!(matches!(
            solve_point_alignment(&corrs(&PoseSim3::identity(), &pts), false, None),
            Err(SolverError::DegenerateSample(_))
        ));
    }

    #[test]
    fn vertical_two_points_near_half_turn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g_map = random_unit_vector(&mut rng);
        for (scale_known, s) in [(true, 1.0), (false, 0.7)] {
            // A rotation of 179.9° about the map gravity axis, composed with a query tilt.
            let about_g = Rotation3::from_axis_angle(&g_map, 179.9f64.to_radians());
            let tilt = Rotation3::from_scaled_axis(Vector3::new(0.2, 0.1, -0.3));
            let r = tilt * about_g;
            let g_query = Unit::new_normalize(r * g_map.into_inner());
            let truth = PoseSim3::new(s, r, Vector3::new(0.3, 0.4, -2.0));
            let pts = random_points(&mut rng, 2);
            let prior = GravityPrior::new(g_map, g_query);
            let p = solve_point_alignment(&corrs(&truth, &pts), scale_known, Some(&prior))
                .unwrap()
                .candidates[0];
            assert!(
                rotation_distance(&p.rotation, &truth.rotation) < 1e-9,
                "{scale_known}"
            );
            assert!((p.translation - truth.translation).norm() < 1e-9);
            assert!((p.scale - s).abs() < 1e-9);
        }
    }
}
