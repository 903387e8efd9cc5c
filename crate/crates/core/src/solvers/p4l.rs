//! Four ray-line incidences with known vertical direction.
//!
//! After gravity pre-alignment the rotation is `Rz(θ)`. With `q = tan(θ/2)`,
//! `(1 + q²) Rz` has entries quadratic in `q`, so each incidence
//! `T · (R v × d) + dᵀ R w + (c × d)ᵀ R v = 0` is one row of a 4x4 system
//! `M(q) [T; 1] = 0` with quadratic entries. Its determinant is an octic
//! with the factor `1 + q²`; the remaining sextic gives the angles.
//! Roots with `|q| > 1` are taken from a second chart rotated by 180°.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector4};

use super::grel::{incidence_residual, Normalization};
use super::poly::{real_roots, Poly};
use super::{ray_depth_at_line, rays_of, LineCorr2D, SolutionSet, SolverError};
use crate::geom::{
    gravity_prealign, vertical_rotation, GeneralizedRay, GravityPrior, PluckerLine, PoseSE3,
    PoseSim3, RigCalibration, SVD_MAX_ITER,
};

/// Coefficient matrices of `(1 + q²) Rz(θ) = A0 + A1 q + A2 q²`.
fn rz_coeffs() -> [Matrix3<f64>; 3] {
    [
        Matrix3::identity(),
        Matrix3::new(0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)),
    ]
}

fn row_of(r: &Matrix3<f64>, ray: &GeneralizedRay, l: &PluckerLine) -> Vector4<f64> {
    let d = ray.direction.into_inner();
    let rv = r * l.direction.into_inner();
    let a = rv.cross(&d);
    Vector4::new(
        a.x,
        a.y,
        a.z,
        d.dot(&(r * l.moment)) + ray.moment().dot(&rv),
    )
}

fn det4(m: &[[Poly; 4]; 4]) -> Poly {
    // Laplace expansion along the first row with 3x3 minors.
    let det3 = |rows: [usize; 3], cols: [usize; 3]| -> Poly {
        let e = |i: usize, j: usize| &m[rows[i]][cols[j]];
        let t1 = e(0, 0) * &(&(e(1, 1) * e(2, 2)) - &(e(1, 2) * e(2, 1)));
        let t2 = e(0, 1) * &(&(e(1, 0) * e(2, 2)) - &(e(1, 2) * e(2, 0)));
        let t3 = e(0, 2) * &(&(e(1, 0) * e(2, 1)) - &(e(1, 1) * e(2, 0)));
        &(&t1 - &t2) + &t3
    };
    let mut out = Poly::zero();
    for j in 0..4 {
        let cols: Vec<usize> = (0..4).filter(|&c| c != j).collect();
        let minor = det3([1, 2, 3], [cols[0], cols[1], cols[2]]);
        let term = &m[0][j] * &minor;
        out = if j % 2 == 0 {
            &out + &term
        } else {
            &out - &term
        };
    }
    out
}

/// Angles (radians) of `Rz` solving the chart; only roots with `|q| <= limit`.
fn chart_angles(rays: &[GeneralizedRay], lines: &[PluckerLine], limit: f64) -> Vec<f64> {
    let a = rz_coeffs();
    let rows: Vec<[Vector4<f64>; 3]> = rays
        .iter()
        .zip(lines)
        .map(|(r, l)| {
            [
                row_of(&a[0], r, l),
                row_of(&a[1], r, l),
                row_of(&a[2], r, l),
            ]
        })
        .collect();
    let m: [[Poly; 4]; 4] = std::array::from_fn(|i| {
        std::array::from_fn(|j| Poly::quadratic(rows[i][0][j], rows[i][1][j], rows[i][2][j]))
    });
    let det = det4(&m);
    let (sextic, rem) = det.div_rem(&Poly::quadratic(1.0, 0.0, 1.0));
    let scale = det.0.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let rem_max = rem.0.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let eliminant = if rem_max <= 1e-8 * scale { sextic } else { det };
    real_roots(&eliminant)
        .into_iter()
        .filter(|q| q.abs() <= limit)
        .map(|q| 2.0 * q.atan())
        .collect()
}

/// Translation from the null vector of `M(θ)`.
fn translation_for(
    theta: f64,
    rays: &[GeneralizedRay],
    lines: &[PluckerLine],
) -> Option<Vector3<f64>> {
    let r = vertical_rotation(theta).into_inner();
    let m = Matrix4::from_rows(&[
        row_of(&r, &rays[0], &lines[0]).transpose(),
        row_of(&r, &rays[1], &lines[1]).transpose(),
        row_of(&r, &rays[2], &lines[2]).transpose(),
        row_of(&r, &rays[3], &lines[3]).transpose(),
    ]);
    let svd = m.try_svd(false, true, f64::EPSILON, SVD_MAX_ITER)?;
    let x = svd.v_t?.row(3).transpose();
    if x[3].abs() < 1e-12 * x.norm() {
        return None;
    }
    Some(Vector3::new(x[0], x[1], x[2]) / x[3])
}

/// Newton on the four incidences in `(θ, T)`.
fn polish(
    theta: f64,
    t: Vector3<f64>,
    rays: &[GeneralizedRay],
    lines: &[PluckerLine],
) -> (f64, Vector3<f64>) {
    let ez = crate::geom::skew(&Vector3::z());
    let eval = |theta: f64, t: &Vector3<f64>| {
        let r = vertical_rotation(theta).into_inner();
        let dr = ez * r;
        let mut f = Vector4::zeros();
        let mut j = Matrix4::zeros();
        for k in 0..4 {
            let row = row_of(&r, &rays[k], &lines[k]);
            let drow = row_of(&dr, &rays[k], &lines[k]);
            f[k] = row.xyz().dot(t) + row[3];
            j[(k, 0)] = drow.xyz().dot(t) + drow[3];
            j[(k, 1)] = row[0];
            j[(k, 2)] = row[1];
            j[(k, 3)] = row[2];
        }
        (f, j)
    };
    let (mut theta, mut t) = (theta, t);
    let (mut f, mut j) = eval(theta, &t);
    for _ in 0..8 {
        let Some(step) = j.lu().solve(&f) else { break };
        let th1 = theta - step[0];
        let t1 = t - step.fixed_rows::<3>(1);
        let (f1, j1) = eval(th1, &t1);
        if !(f1.norm() < f.norm()) {
            break;
        }
        theta = th1;
        t = t1;
        f = f1;
        j = j1;
    }
    (theta, t)
}

/// All poses with vertical-only relative rotation satisfying four ray-line
/// incidences. Candidates whose rays meet their line behind the ray origin
/// are discarded.
pub fn solve_p4l_u(
    corrs: &[LineCorr2D],
    rig: &RigCalibration,
    gravity: &GravityPrior,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    if corrs.len() != 4 {
        return Err(SolverError::SampleSize {
            needed: 4,
            got: corrs.len(),
        });
    }
    let raw_rays = rays_of(corrs, rig)?;
    let raw_lines: Vec<PluckerLine> = corrs.iter().map(|c| c.target).collect();
    let norm = Normalization::of_lines(&raw_lines);
    let (qm, qq) = gravity_prealign(gravity);
    let to_map = PoseSim3::new(1.0, qm, Vector3::zeros());
    let rays: Vec<GeneralizedRay> = raw_rays
        .iter()
        .map(|r| {
            let n = norm.ray(r);
            GeneralizedRay::new(
                qq * n.origin,
                nalgebra::Unit::new_unchecked(qq * n.direction.into_inner()),
            )
        })
        .collect();
    let lines: Vec<PluckerLine> = raw_lines
        .iter()
        .map(|l| norm.line(l).transformed(&to_map))
        .collect();

    // Second chart: the map is pre-rotated by 180° about the vertical.
    let flip = PoseSim3::new(
        1.0,
        vertical_rotation(std::f64::consts::PI),
        Vector3::zeros(),
    );
    let flipped: Vec<PluckerLine> = lines.iter().map(|l| l.transformed(&flip)).collect();
    let mut thetas = chart_angles(&rays, &lines, 1.0);
    thetas.extend(
        chart_angles(&rays, &flipped, 1.0 - 1e-12)
            .into_iter()
            .map(|th| th + std::f64::consts::PI),
    );
    if thetas.is_empty() {
        // A consistent sample always has a root; none at all means M(q) vanished identically.
        let probe = translation_for(0.3, &rays, &lines);
        if probe.is_none() {
            return Err(SolverError::DegenerateSample(
                "translation elimination singular",
            ));
        }
    }

    let mut poses: Vec<(f64, PoseSE3)> = Vec::new();
    let mut rejected = 0;
    for th in thetas {
        let Some(t) = translation_for(th, &rays, &lines) else {
            rejected += 1;
            continue;
        };
        let (th, t) = polish(th, t, &rays, &lines);
        let pose_aligned = PoseSE3::new(vertical_rotation(th), t);
        let sim = PoseSim3::from_se3(&pose_aligned);
        let in_front = rays
            .iter()
            .zip(&lines)
            .all(|(ray, l)| ray_depth_at_line(ray, &l.transformed(&sim)).is_none_or(|d| d > 0.0));
        if !in_front {
            rejected += 1;
            continue;
        }
        let angle = th.rem_euclid(2.0 * std::f64::consts::PI);
        if poses.iter().any(|(a, p)| {
            let da = (a - angle).abs();
            da.min(2.0 * std::f64::consts::PI - da) < 1e-9
                && (p.translation - t).norm() < 1e-9 * (1.0 + t.norm())
        }) {
            continue;
        }
        poses.push((angle, pose_aligned));
    }

    let qq_inv: Rotation3<f64> = qq.inverse();
    let restored: Vec<PoseSE3> = poses
        .into_iter()
        .map(|(_, p)| {
            let unaligned = PoseSE3::new(qq_inv * p.rotation * qm, qq_inv * p.translation);
            norm.restore(&unaligned)
        })
        .collect();
    let mut set = SolutionSet::filtered(restored, |p| {
        incidence_residual(p, &raw_rays, &raw_lines, norm.scale)
    });
    set.diagnostics.rejected += rejected;
    Ok(set)
}
