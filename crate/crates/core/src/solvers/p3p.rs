//! Absolute pose from three point correspondences, for single pinhole
//! cameras (quartic in the depth ratio) and for generalized cameras
//! (octic resultant of the three distance equations).

use nalgebra::{Matrix3, Vector3};

use super::align::umeyama;
use super::poly::{real_roots, Poly};
use super::{check_size, rays_of, GeneralizedRay, PointCorr2D, SolutionSet, SolverError};
use crate::geom::{point_point_residual, PoseSE3, RigCalibration, Vec3};

fn collinear(x: &[Vec3; 3]) -> bool {
    let a = x[1] - x[0];
    let b = x[2] - x[0];
    a.cross(&b).norm() <= 1e-10 * a.norm() * b.norm()
}

/// Central-camera P3P. Returns up to four poses with all three points in
/// front of the camera. `camera_index` is ignored; observations are taken
/// in the camera frame.
pub fn solve_p3p(corrs: &[PointCorr2D]) -> Result<SolutionSet<PoseSE3>, SolverError> {
    if corrs.len() != 3 {
        return Err(SolverError::SampleSize {
            needed: 3,
            got: corrs.len(),
        });
    }
    let x = [corrs[0].target, corrs[1].target, corrs[2].target];
    if collinear(&x) {
        return Err(SolverError::DegenerateSample("collinear map points"));
    }
    let f: Vec<Vec3> = corrs
        .iter()
        .map(|c| c.observation.bearing().into_inner())
        .collect();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if f[i].cross(&f[j]).norm() < 1e-12 {
            return Err(SolverError::DegenerateSample("coincident rays"));
        }
    }
    let scale = ((x[0] - x[1]).norm() + (x[0] - x[2]).norm() + (x[1] - x[2]).norm()) / 3.0;
    let a = (x[0] - x[1]).norm_squared() / (scale * scale);
    let b = (x[0] - x[2]).norm_squared() / (scale * scale);
    let c = (x[1] - x[2]).norm_squared() / (scale * scale);
    let c12 = f[0].dot(&f[1]);
    let c13 = f[0].dot(&f[2]);
    let c23 = f[1].dot(&f[2]);

    // With λ2 = u λ1 and λ3 = v λ1, the two conics in (u, v) reduce to
    // u = N(v) / D(v) and a quartic in v.
    let k = Poly::quadratic(1.0, -2.0 * c13, 1.0);
    let n = &Poly::quadratic(-b, 0.0, b) + &k.scale(a - c);
    let dn = Poly::linear(-2.0 * b * c12, 2.0 * b * c23);
    let quartic = &(&(&n * &n).scale(b) - &(&n * &dn).scale(2.0 * b * c12))
        + &(&(&Poly::constant(b) - &k.scale(a)) * &(&dn * &dn));

    let dist2 = [a, b, c];
    let rays: Vec<GeneralizedRay> = corrs
        .iter()
        .map(|c| GeneralizedRay::central(&c.observation))
        .collect();
    let mut raw = Vec::new();
    for v in real_roots(&quartic) {
        let den = dn.eval(v);
        let kv = k.eval(v);
        if v <= 0.0 || den.abs() < 1e-14 || kv <= 0.0 {
            continue;
        }
        let u = n.eval(v) / den;
        if u <= 0.0 {
            continue;
        }
        let l1 = (b / kv).sqrt();
        let depths = polish_depths(&rays, &dist2, [l1, u * l1, v * l1]);
        if depths.iter().any(|&d| d <= 0.0) {
            continue;
        }
        raw.push(pose_from_depths(&rays, &depths, &x, scale));
    }
    let set = SolutionSet::filtered(dedup(raw), |p| reprojection(p, corrs));
    Ok(set)
}

/// Generalized absolute pose (body-frame pose of a calibrated rig) from
/// three ray-point correspondences. With more than three correspondences
/// the first three generate the candidates, which are then ordered by
/// their largest reprojection error over all correspondences.
pub fn solve_gpnp(
    corrs: &[PointCorr2D],
    rig: &RigCalibration,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    check_size(corrs.len(), 3)?;
    let rays = rays_of(&corrs[..3], rig)?;
    let x = [corrs[0].target, corrs[1].target, corrs[2].target];
    if collinear(&x) {
        return Err(SolverError::DegenerateSample("collinear map points"));
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let same_dir = rays[i].direction.cross(&rays[j].direction).norm() < 1e-12;
        let same_origin = (rays[i].origin - rays[j].origin).norm() < 1e-12;
        if same_dir && same_origin {
            return Err(SolverError::DegenerateSample("coincident rays"));
        }
    }
    let raw = generalized_p3p(&rays, &x, true);
    let residual = |p: &PoseSE3| rig_reprojection(p, &corrs[..3], rig);
    let mut set = SolutionSet::filtered(dedup(raw), residual);
    if corrs.len() > 3 {
        let mut scored: Vec<(f64, PoseSE3)> = set
            .candidates
            .into_iter()
            .map(|p| (rig_reprojection(&p, corrs, rig), p))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        set.candidates = scored.into_iter().map(|(_, p)| p).collect();
    }
    Ok(set)
}

/// Rigid poses `Y = R X + T` placing each point `x[i]` on ray `i`
/// (`Y = c_i + λ_i d_i`). When `cheirality` is set only positive depths
/// are kept; otherwise rays are treated as full lines.
pub(crate) fn generalized_p3p(
    rays: &[GeneralizedRay],
    x: &[Vec3; 3],
    cheirality: bool,
) -> Vec<PoseSE3> {
    let scale = ((x[0] - x[1]).norm() + (x[0] - x[2]).norm() + (x[1] - x[2]).norm()) / 3.0;
    let c: Vec<Vec3> = rays.iter().map(|r| r.origin / scale).collect();
    let d: Vec<Vec3> = rays.iter().map(|r| r.direction.into_inner()).collect();
    let dist2 = [
        (x[0] - x[1]).norm_squared() / (scale * scale),
        (x[0] - x[2]).norm_squared() / (scale * scale),
        (x[1] - x[2]).norm_squared() / (scale * scale),
    ];
    let c12 = c[0] - c[1];
    let c13 = c[0] - c[2];
    let c23 = c[1] - c[2];
    let d12 = d[0].dot(&d[1]);
    let d13 = d[0].dot(&d[2]);
    let d23 = d[1].dot(&d[2]);

    // Bivariate polynomials in (λ2, λ3) stored by powers of λ3.
    type Bi = Vec<Poly>;
    fn bi_mul(a: &Bi, b: &Bi) -> Bi {
        let mut out = vec![Poly::zero(); a.len() + b.len() - 1];
        for (i, p) in a.iter().enumerate() {
            for (j, q) in b.iter().enumerate() {
                out[i + j] = &out[i + j] + &(p * q);
            }
        }
        out
    }
    fn bi_add(a: &Bi, b: &Bi) -> Bi {
        let n = a.len().max(b.len());
        (0..n)
            .map(|k| {
                let z = Poly::zero();
                a.get(k).unwrap_or(&z) + b.get(k).unwrap_or(&z)
            })
            .collect()
    }
    fn bi_scale(a: &Bi, s: f64) -> Bi {
        a.iter().map(|p| p.scale(s)).collect()
    }

    // E12 = λ1² + λ1 L + Q2, E13 = λ1² + λ1 L3 + Q3.
    let l = Poly::linear(2.0 * d[0].dot(&c12), -2.0 * d12);
    let q2 = Poly::quadratic(c12.norm_squared() - dist2[0], -2.0 * d[1].dot(&c12), 1.0);
    // A = L - L3, B = Q2 - Q3, so that λ1 = -B / A.
    let a_bi: Bi = vec![
        Poly::linear(2.0 * d[0].dot(&(c12 - c13)), -2.0 * d12),
        Poly::constant(2.0 * d13),
    ];
    let b_bi: Bi = vec![
        &q2 - &Poly::constant(c13.norm_squared() - dist2[1]),
        Poly::constant(2.0 * d[2].dot(&c13)),
        Poly::constant(-1.0),
    ];
    let l_bi: Bi = vec![l.clone()];
    let q2_bi: Bi = vec![q2.clone()];
    // F = B² - A B L + A² Q2.
    let f = bi_add(
        &bi_add(
            &bi_mul(&b_bi, &b_bi),
            &bi_scale(&bi_mul(&bi_mul(&a_bi, &b_bi), &l_bi), -1.0),
        ),
        &bi_mul(&bi_mul(&a_bi, &a_bi), &q2_bi),
    );
    // E23 = λ3² + P λ3 + Q.
    let p = Poly::linear(-2.0 * d[2].dot(&c23), -2.0 * d23);
    let q = Poly::quadratic(c23.norm_squared() - dist2[2], 2.0 * d[1].dot(&c23), 1.0);
    let mut red = f.clone();
    for k in (2..red.len()).rev() {
        let fk = red[k].clone();
        red[k - 1] = &red[k - 1] - &(&fk * &p);
        red[k - 2] = &red[k - 2] - &(&fk * &q);
        red[k] = Poly::zero();
    }
    let r0 = red[0].clone();
    let r1 = red.get(1).cloned().unwrap_or_else(Poly::zero);
    let resultant = &(&(&r0 * &r0) - &(&(&p * &r0) * &r1)) + &(&q * &(&r1 * &r1));

    let unit_rays: Vec<GeneralizedRay> = rays
        .iter()
        .map(|r| GeneralizedRay::new(r.origin / scale, r.direction))
        .collect();
    let mut out = Vec::new();
    for l2 in real_roots(&resultant) {
        let r1v = r1.eval(l2);
        let mut l3_options = Vec::new();
        if r1v.abs() > 1e-12 * (1.0 + r0.eval(l2).abs()) {
            l3_options.push(-r0.eval(l2) / r1v);
        } else {
            l3_options.extend(super::poly::quadratic_roots(1.0, p.eval(l2), q.eval(l2)));
        }
        for l3 in l3_options {
            let av = a_bi[0].eval(l2) + a_bi[1].eval(l2) * l3;
            if av.abs() < 1e-14 {
                continue;
            }
            let bv = b_bi[0].eval(l2) + b_bi[1].eval(l2) * l3 + b_bi[2].eval(l2) * l3 * l3;
            let l1 = -bv / av;
            let depths = polish_depths(&unit_rays, &dist2, [l1, l2, l3]);
            if !depths.iter().all(|d| d.is_finite()) {
                continue;
            }
            if cheirality && depths.iter().any(|&d| d <= 0.0) {
                continue;
            }
            out.push(pose_from_depths(&unit_rays, &depths, x, scale));
        }
    }
    out
}

/// Newton iterations on the three distance equations
/// `|c_i + λ_i d_i - c_j - λ_j d_j|² = D_ij²`.
fn polish_depths(rays: &[GeneralizedRay], dist2: &[f64; 3], mut lam: [f64; 3]) -> [f64; 3] {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    let eval = |lam: &[f64; 3]| {
        let y: Vec<Vec3> = (0..3).map(|i| rays[i].point_at(lam[i])).collect();
        let mut r = Vector3::zeros();
        let mut j = Matrix3::zeros();
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let diff = y[a] - y[b];
            r[k] = diff.norm_squared() - dist2[k];
            j[(k, a)] = 2.0 * diff.dot(&rays[a].direction);
            j[(k, b)] = -2.0 * diff.dot(&rays[b].direction);
        }
        (r, j)
    };
    let (mut r, mut j) = eval(&lam);
    for _ in 0..6 {
        let Some(step) = j.lu().solve(&r) else { break };
        let trial = [lam[0] - step[0], lam[1] - step[1], lam[2] - step[2]];
        let (r2, j2) = eval(&trial);
        if !(r2.norm() < r.norm()) {
            break;
        }
        lam = trial;
        r = r2;
        j = j2;
        if r.norm() < 1e-15 {
            break;
        }
    }
    lam
}

fn pose_from_depths(
    rays: &[GeneralizedRay],
    depths: &[f64; 3],
    x: &[Vec3; 3],
    scale: f64,
) -> PoseSE3 {
    let y: Vec<Vec3> = (0..3)
        .map(|i| rays[i].point_at(depths[i]) * scale)
        .collect();
    umeyama(x, &y, false).to_se3()
}

fn dedup(mut poses: Vec<PoseSE3>) -> Vec<PoseSE3> {
    let mut out: Vec<PoseSE3> = Vec::with_capacity(poses.len());
    for p in poses.drain(..) {
        let dup = out.iter().any(|q| {
            (q.rotation.matrix() - p.rotation.matrix()).norm() < 1e-9
                && (q.translation - p.translation).norm() < 1e-9 * (1.0 + p.translation.norm())
        });
        if !dup {
            out.push(p);
        }
    }
    out
}

fn reprojection(p: &PoseSE3, corrs: &[PointCorr2D]) -> f64 {
    corrs
        .iter()
        .map(|c| point_point_residual(&c.observation, p, &c.target).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Reprojection error through each correspondence's rig camera.
pub(crate) fn rig_reprojection(p: &PoseSE3, corrs: &[PointCorr2D], rig: &RigCalibration) -> f64 {
    corrs
        .iter()
        .map(|c| match rig.camera(c.camera_index) {
            Ok(cam) => point_point_residual(&c.observation, &cam.pose.compose(p), &c.target)
                .unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}
