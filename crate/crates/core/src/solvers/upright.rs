//! Two-point absolute pose with known vertical direction.

use super::p3p::rig_reprojection;
use super::poly::quadratic_roots;
use super::{rays_of, PointCorr2D, SolutionSet, SolverError};
use crate::geom::{
    gravity_prealign, vertical_rotation, GravityPrior, PoseSE3, RigCalibration, Vec3,
};

/// Single pinhole camera with known vertical. Up to two poses.
pub fn solve_p2p_u(
    corrs: &[PointCorr2D],
    gravity: &GravityPrior,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    let rig = RigCalibration::single(crate::geom::Intrinsics::new(1.0, 1.0, 0.0, 0.0));
    let central: Vec<PointCorr2D> = corrs
        .iter()
        .map(|c| PointCorr2D {
            camera_index: 0,
            ..*c
        })
        .collect();
    solve_gpnp_u(&central, &rig, gravity)
}

/// Generalized camera with known vertical. Uses exactly two correspondences.
///
/// After pre-aligning both frames to the vertical, the vertical component of
/// `λ1 d1 - λ2 d2 + c1 - c2 = R (X1 - X2)` is linear in the depths and its
/// horizontal norm is quadratic, giving at most two depth pairs. The
/// rotation angle then follows from the horizontal directions.
pub fn solve_gpnp_u(
    corrs: &[PointCorr2D],
    rig: &RigCalibration,
    gravity: &GravityPrior,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    if corrs.len() != 2 {
        return Err(SolverError::SampleSize {
            needed: 2,
            got: corrs.len(),
        });
    }
    let rays = rays_of(corrs, rig)?;
    let (qm, qq) = gravity_prealign(gravity);
    let x1 = qm * corrs[0].target;
    let x2 = qm * corrs[1].target;
    let d1 = qq * rays[0].direction.into_inner();
    let d2 = qq * rays[1].direction.into_inner();
    let c1 = qq * rays[0].origin;
    let c2 = qq * rays[1].origin;
    let dx = x1 - x2;
    let scale = dx.norm();
    if scale == 0.0 {
        return Err(SolverError::DegenerateSample("coincident map points"));
    }
    let horiz = dx.x.hypot(dx.y);
    if horiz <= 1e-9 * scale {
        return Err(SolverError::DegenerateSample(
            "map points separated only vertically",
        ));
    }
    let c12 = c1 - c2;
    // λ_a = α + β λ_b from the vertical component; pick the better-conditioned pivot.
    let swap = d2.z.abs() > d1.z.abs();
    let (da, db, sign) = if swap { (d2, d1, -1.0) } else { (d1, d2, 1.0) };
    if da.z.abs() < 1e-12 {
        return Err(SolverError::DegenerateSample("both rays horizontal"));
    }
    // sign·(λa da - λb db) + c12 = dx, z-component.
    let alpha = (sign * (dx.z - c12.z)) / da.z;
    let beta = db.z / da.z;
    // Horizontal part: h(λb) = sign·((α + β λb) da - λb db) + c12, |h|² = |dx_h|².
    let h0 = Vec3::new(
        sign * alpha * da.x + c12.x,
        sign * alpha * da.y + c12.y,
        0.0,
    );
    let h1 = Vec3::new(
        sign * (beta * da.x - db.x),
        sign * (beta * da.y - db.y),
        0.0,
    );
    let roots = quadratic_roots(
        h1.norm_squared(),
        2.0 * h0.dot(&h1),
        h0.norm_squared() - horiz * horiz,
    );

    let mut raw = Vec::new();
    for lb in roots {
        let la = alpha + beta * lb;
        let (l1, l2) = if swap { (lb, la) } else { (la, lb) };
        if l1 <= 0.0 || l2 <= 0.0 {
            continue;
        }
        let h = h0 + h1 * lb;
        let theta = (dx.x * h.y - dx.y * h.x).atan2(dx.x * h.x + dx.y * h.y);
        let rz = vertical_rotation(theta);
        let y1 = c1 + d1 * l1;
        let y2 = c2 + d2 * l2;
        let t = 0.5 * ((y1 - rz * x1) + (y2 - rz * x2));
        let qq_inv = qq.inverse();
        raw.push(PoseSE3::new(qq_inv * rz * qm, qq_inv * t));
    }
    if raw.len() == 2 {
        let (a, b) = (&raw[0], &raw[1]);
        if (a.rotation.matrix() - b.rotation.matrix()).norm() < 1e-12
            && (a.translation - b.translation).norm() < 1e-12
        {
            raw.pop();
        }
    }
    Ok(SolutionSet::filtered(raw, |p| {
        rig_reprojection(p, corrs, rig)
    }))
}
