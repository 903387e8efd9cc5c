//! Alignment of local 3D points to map lines.
//!
//! All variants estimate the inverse transform `X = B x̃ + b` (query to map),
//! under which each local point must land on its line, `(B x̃ + b) × v = w`.
//! Each pair contributes the two components of that equation orthogonal to
//! `v`. Where a problem has an odd number of unknowns, the last pair
//! contributes only its first component to the generating system; the
//! remaining component is left to scoring.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SMatrix, Vector3};
use num_complex::Complex64;

use super::homotopy::{real_part, CMat, CVec, Homotopy, PathEnd, System, TrackerOptions};
use super::p3p::generalized_p3p;
use super::poly::quadratic_roots;
use super::{check_size, spread, LineCorr3D, SolutionSet, SolverError};
use crate::geom::{
    gravity_prealign, project_to_rotation, GeneralizedRay, GravityPrior, PluckerLine, PoseSim3,
    Vec3, SVD_MAX_ITER,
};

/// Deterministic orthonormal basis of the plane orthogonal to `v`.
fn perp_basis(v: &Vec3) -> (Vec3, Vec3) {
    let mut a = Vector3::zeros();
    a[v.iamin()] = 1.0;
    let e1 = v.cross(&a).normalize();
    (e1, v.cross(&e1))
}

/// Centered and scaled coordinates for both sides. For rigid problems the
/// two scales are equal so that `B` stays a rotation.
struct Frames {
    map_center: Vec3,
    map_scale: f64,
    local_center: Vec3,
    local_scale: f64,
}

impl Frames {
    fn new(lines: &[PluckerLine], local: &[Vec3], same_scale: bool) -> Self {
        let pts: Vec<Vec3> = lines.iter().map(|l| l.closest_point_to_origin()).collect();
        let map_center = pts.iter().sum::<Vec3>() / pts.len() as f64;
        let map_scale = spread(pts.into_iter());
        let local_center = local.iter().sum::<Vec3>() / local.len() as f64;
        let local_scale = if same_scale {
            map_scale
        } else {
            spread(local.iter().copied())
        };
        Self {
            map_center,
            map_scale,
            local_center,
            local_scale,
        }
    }

    fn line(&self, l: &PluckerLine) -> PluckerLine {
        PluckerLine::through_point(
            &((l.closest_point_to_origin() - self.map_center) / self.map_scale),
            &l.direction,
        )
    }

    fn local(&self, x: &Vec3) -> Vec3 {
        (x - self.local_center) / self.local_scale
    }

    /// `(B_n, b_n)` in normalized frames to `(B, b)` in the given frames.
    fn restore(&self, bn: &Matrix3<f64>, tn: &Vec3) -> (Matrix3<f64>, Vec3) {
        let b = bn * (self.map_scale / self.local_scale);
        let t = tn * self.map_scale + self.map_center - b * self.local_center;
        (b, t)
    }
}

/// Map-to-query pose from an inverse transform `X = B x̃ + b` with `B = σ Q`.
fn pose_from_inverse(b: &Matrix3<f64>, t: &Vec3) -> Option<PoseSim3> {
    let det = b.determinant();
    if det <= 0.0 {
        return None;
    }
    let sigma = det.cbrt();
    let q = project_to_rotation(&(b / sigma));
    let r = q.inverse();
    let s = 1.0 / sigma;
    Some(PoseSim3::new(s, r, -(r * t) * s))
}

/// Rows `(v × e)ᵀ y = e · w` for the components of a point-on-line constraint.
fn components(l: &PluckerLine) -> [(Vec3, f64); 2] {
    let v = l.direction.into_inner();
    let (e1, e2) = perp_basis(&v);
    [
        (v.cross(&e1), e1.dot(&l.moment)),
        (v.cross(&e2), e2.dot(&l.moment)),
    ]
}

/// Particular solution and null-space basis (columns) of an underdetermined system.
fn affine_family(
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), SolverError> {
    let (r, n) = a.shape();
    let mut sq = DMatrix::<f64>::zeros(n.max(r), n);
    sq.view_mut((0, 0), (r, n)).copy_from(a);
    let mut rhs_sq = DVector::<f64>::zeros(n.max(r));
    rhs_sq.rows_mut(0, r).copy_from(rhs);
    let svd = sq
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| SolverError::NumericalFailure("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    if sv[r - 1] < 1e-10 * sv[0] {
        return Err(SolverError::DegenerateSample(
            "dependent point-on-line constraints",
        ));
    }
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut z0 = DVector::<f64>::zeros(n);
    for i in 0..r {
        let c = u.column(i).dot(&rhs_sq) / sv[i];
        z0 += v_t.row(i).transpose() * c;
    }
    let null = DMatrix::from_fn(n, n - r, |i, k| v_t[(r + k, i)]);
    Ok((z0, null))
}

/// Generating residual: full point-to-line distance for the pairs that
/// enter with both components, the first component only for `partial`.
fn generating_residual(
    pose: &PoseSim3,
    corrs: &[LineCorr3D],
    full: usize,
    partial: bool,
    scale: f64,
) -> f64 {
    let inv = pose.inverse();
    let mut worst = 0.0f64;
    for (k, c) in corrs.iter().enumerate().take(full + partial as usize) {
        let x = inv.transform_point(&c.local_point);
        let r = if k < full {
            c.target.distance_to_point(&x)
        } else {
            let (row, rhs) = components(&c.target)[0];
            (row.dot(&x) - rhs).abs()
        };
        worst = worst.max(r / scale);
    }
    worst
}

fn line_spread(corrs: &[LineCorr3D]) -> f64 {
    spread(corrs.iter().map(|c| c.target.closest_point_to_origin()))
}

/// Largest point-to-line distance over all pairs, relative to the map spread.
fn full_residual(pose: &PoseSim3, corrs: &[LineCorr3D]) -> f64 {
    generating_residual(pose, corrs, corrs.len(), false, line_spread(corrs))
}

/// Poses `x̃ = s R X + t` placing each local point on its map line.
///
/// Minimal sizes: 3 pairs (known scale), 4 pairs (unknown scale), 2 pairs
/// (known vertical and scale), 3 pairs (known vertical, unknown scale).
/// With `scale_known` the returned poses have `s = 1`. When more pairs are
/// given than needed, the first ones generate the candidates, which are
/// ordered by their largest residual over all pairs.
pub fn solve_point_to_line_alignment(
    corrs: &[LineCorr3D],
    scale_known: bool,
    gravity: Option<&GravityPrior>,
) -> Result<SolutionSet<PoseSim3>, SolverError> {
    let needed = match (scale_known, gravity.is_some()) {
        (true, false) => 3,
        (false, false) => 4,
        (true, true) => 2,
        (false, true) => 3,
    };
    check_size(corrs.len(), needed)?;
    let sample = &corrs[..needed];
    let scale = line_spread(sample);
    let (raw, full, partial) = match (scale_known, gravity) {
        (true, None) => (known_scale(sample)?, 3, false),
        (false, None) => (unknown_scale(sample)?, 3, true),
        (true, Some(g)) => (vertical(sample, g, true)?, 2, false),
        (false, Some(g)) => (vertical(sample, g, false)?, 2, true),
    };
    let mut set = SolutionSet::filtered(raw, |p| {
        generating_residual(p, sample, full, partial, scale)
    });
    if corrs.len() > needed {
        let mut scored: Vec<(f64, PoseSim3)> = set
            .candidates
            .into_iter()
            .map(|p| (full_residual(&p, corrs), p))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        set.candidates = scored.into_iter().map(|(_, p)| p).collect();
    }
    Ok(set)
}

/// Known scale, free rotation: a generalized three-point problem with the
/// map lines as rays and the local points as the world points.
fn known_scale(corrs: &[LineCorr3D]) -> Result<Vec<PoseSim3>, SolverError> {
    let x = [
        corrs[0].local_point,
        corrs[1].local_point,
        corrs[2].local_point,
    ];
    let a = x[1] - x[0];
    let b = x[2] - x[0];
    if a.cross(&b).norm() <= 1e-10 * a.norm() * b.norm() {
        return Err(SolverError::DegenerateSample("collinear local points"));
    }
    let rays: Vec<GeneralizedRay> = corrs
        .iter()
        .map(|c| GeneralizedRay::new(c.target.closest_point_to_origin(), c.target.direction))
        .collect();
    // Inverse poses X_map = R x̃ + T; rays are unoriented lines here.
    Ok(generalized_p3p(&rays, &x, false)
        .into_iter()
        .map(|inv| PoseSim3::from_se3(&inv.inverse()))
        .collect())
}

/// Quadratic constraints making the rows of `B` orthogonal with equal norms,
/// on the affine family `z = z0 + N y`.
struct ScaledRotation {
    z0: [f64; 12],
    null: SMatrix<f64, 12, 5>,
}

impl ScaledRotation {
    fn rows<T: nalgebra::ComplexField<RealField = f64> + Copy>(&self, y: &[T; 5]) -> [[T; 3]; 3] {
        let mut z = [T::zero(); 9];
        for (i, zi) in z.iter_mut().enumerate() {
            let mut acc = T::from_real(self.z0[i]);
            for (k, yk) in y.iter().enumerate() {
                acc += *yk * T::from_real(self.null[(i, k)]);
            }
            *zi = acc;
        }
        [[z[0], z[1], z[2]], [z[3], z[4], z[5]], [z[6], z[7], z[8]]]
    }

    fn eval_generic<T: nalgebra::ComplexField<RealField = f64> + Copy>(
        &self,
        y: &[T; 5],
    ) -> ([T; 5], [[T; 5]; 5]) {
        let r = self.rows(y);
        let dot = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let d = |row: usize, k: usize| -> [T; 3] {
            std::array::from_fn(|j| T::from_real(self.null[(3 * row + j, k)]))
        };
        const PAIRS: [((usize, usize), (usize, usize), f64); 5] = [
            ((0, 1), (0, 0), 0.0),
            ((0, 2), (0, 0), 0.0),
            ((1, 2), (0, 0), 0.0),
            ((0, 0), (1, 1), -1.0),
            ((0, 0), (2, 2), -1.0),
        ];
        let mut f = [T::zero(); 5];
        let mut jac = [[T::zero(); 5]; 5];
        for (e, &((a, b), (c, dd), sign)) in PAIRS.iter().enumerate() {
            f[e] = dot(&r[a], &r[b]);
            if sign != 0.0 {
                f[e] -= dot(&r[c], &r[dd]);
            }
            for k in 0..5 {
                let mut g = dot(&d(a, k), &r[b]) + dot(&r[a], &d(b, k));
                if sign != 0.0 {
                    g -= dot(&d(c, k), &r[dd]) + dot(&r[c], &d(dd, k));
                }
                jac[e][k] = g;
            }
        }
        (f, jac)
    }
}

impl System<5> for ScaledRotation {
    fn eval(&self, y: &CVec<5>) -> CVec<5> {
        let (f, _) = self.eval_generic(&[y[0], y[1], y[2], y[3], y[4]]);
        CVec::<5>::from_column_slice(&f)
    }
    fn jacobian(&self, y: &CVec<5>) -> CMat<5> {
        let (_, j) = self.eval_generic(&[y[0], y[1], y[2], y[3], y[4]]);
        CMat::<5>::from_fn(|r, c| j[r][c])
    }
}

/// Total-degree start system `y_k² = 1`.
struct Squares;

impl System<5> for Squares {
    fn eval(&self, y: &CVec<5>) -> CVec<5> {
        y.map(|v| v * v - 1.0)
    }
    fn jacobian(&self, y: &CVec<5>) -> CMat<5> {
        CMat::<5>::from_diagonal(&y.map(|v| v * 2.0))
    }
}

/// Unknown scale, free rotation: seven linear constraints on the twelve
/// entries of `(B, b)`, then the five scaled-rotation conditions on the
/// remaining five-dimensional family.
fn unknown_scale(corrs: &[LineCorr3D]) -> Result<Vec<PoseSim3>, SolverError> {
    let local: Vec<Vec3> = corrs.iter().map(|c| c.local_point).collect();
    let lines: Vec<PluckerLine> = corrs.iter().map(|c| c.target).collect();
    let fr = Frames::new(&lines, &local, false);
    let mut a = DMatrix::<f64>::zeros(7, 12);
    let mut rhs = DVector::<f64>::zeros(7);
    let mut row = 0;
    for (k, (l, x)) in lines.iter().zip(&local).enumerate() {
        let ln = fr.line(l);
        let xn = fr.local(x);
        let comps = components(&ln);
        let take = if k < 3 { 2 } else { 1 };
        for &(g, w) in comps.iter().take(take) {
            // g · (B x + b) = w
            for i in 0..3 {
                for j in 0..3 {
                    a[(row, 3 * i + j)] = g[i] * xn[j];
                }
                a[(row, 9 + i)] = g[i];
            }
            rhs[row] = w;
            row += 1;
        }
    }
    let (z0, null) = affine_family(&a, &rhs)?;
    let sys = ScaledRotation {
        z0: std::array::from_fn(|i| z0[i]),
        null: SMatrix::<f64, 12, 5>::from_fn(|i, k| null[(i, k)]),
    };
    let homotopy = Homotopy {
        target: &sys,
        start: &Squares,
        gamma: Complex64::from_polar(1.0, 0.8137),
    };
    let opts = TrackerOptions::default();
    let mut out: Vec<PoseSim3> = Vec::new();
    let mut failed = 0;
    for mask in 0..32u32 {
        let y0 = CVec::<5>::from_fn(|k, _| {
            Complex64::new(if mask >> k & 1 == 1 { -1.0 } else { 1.0 }, 0.0)
        });
        let y = match homotopy.track(&y0, &opts) {
            PathEnd::Finite(y) => y,
            PathEnd::Diverged => continue,
            PathEnd::Failed => {
                failed += 1;
                continue;
            }
        };
        let Some(y) = real_part(&y, 1e-6) else {
            continue;
        };
        let y = [y[0], y[1], y[2], y[3], y[4]];
        let r = sys.rows(&y);
        let bn = Matrix3::from_fn(|i, j| r[i][j]);
        let z = &z0 + &null * DVector::from_column_slice(&y);
        let tn = Vector3::new(z[9], z[10], z[11]);
        let (b, t) = fr.restore(&bn, &tn);
        if let Some(p) = pose_from_inverse(&b, &t) {
            if !out.iter().any(|q| same_pose(q, &p)) {
                out.push(p);
            }
        }
    }
    if out.is_empty() && failed > 0 {
        return Err(SolverError::NumericalFailure(format!(
            "{failed} of 32 paths failed"
        )));
    }
    Ok(out)
}

fn same_pose(a: &PoseSim3, b: &PoseSim3) -> bool {
    (a.scale - b.scale).abs() < 1e-9 * a.scale
        && (a.rotation.matrix() - b.rotation.matrix()).norm() < 1e-9
        && (a.translation - b.translation).norm() < 1e-9 * (1.0 + a.translation.norm())
}

/// Known vertical. In pre-aligned frames `B = μ Rz(φ)`, linear in
/// `(μ cos φ, μ sin φ, μ)` (or in `(cos φ, sin φ)` with `μ = 1`), leaving a
/// one-dimensional family cut by a single quadratic.
fn vertical(
    corrs: &[LineCorr3D],
    g: &GravityPrior,
    scale_known: bool,
) -> Result<Vec<PoseSim3>, SolverError> {
    let (qm, qq) = gravity_prealign(g);
    let align = PoseSim3::new(1.0, qm, Vector3::zeros());
    let lines: Vec<PluckerLine> = corrs.iter().map(|c| c.target.transformed(&align)).collect();
    let local: Vec<Vec3> = corrs.iter().map(|c| qq * c.local_point).collect();
    // Centering only translates; the scales keep B's vertical structure.
    let fr = Frames::new(&lines, &local, scale_known);

    // Unknowns: scale_known -> (c, s, b1, b2, b3); else (a, b', μ, b1, b2, b3).
    let n = if scale_known { 5 } else { 6 };
    let rows_needed = n - 1;
    let mut a = DMatrix::<f64>::zeros(rows_needed, n);
    let mut rhs = DVector::<f64>::zeros(rows_needed);
    let mut row = 0;
    'outer: for (l, x) in lines.iter().zip(&local) {
        let ln = fr.line(l);
        let xn = fr.local(x);
        for (gv, w) in components(&ln) {
            if row == rows_needed {
                break 'outer;
            }
            // y = (c x1 - s x2 + b1, s x1 + c x2 + b2, μ x3 + b3)
            a[(row, 0)] = gv.x * xn.x + gv.y * xn.y;
            a[(row, 1)] = -gv.x * xn.y + gv.y * xn.x;
            let off = if scale_known {
                rhs[row] = w - gv.z * xn.z;
                2
            } else {
                a[(row, 2)] = gv.z * xn.z;
                rhs[row] = w;
                3
            };
            a[(row, off)] = gv.x;
            a[(row, off + 1)] = gv.y;
            a[(row, off + 2)] = gv.z;
            row += 1;
        }
    }
    let (z0, null) = affine_family(&a, &rhs)?;
    let z1 = null.column(0).into_owned();
    // Quadratic in y for z = z0 + y z1: c² + s² = μ² (μ = 1 when the scale is known).
    let q = |u: &DVector<f64>, v: &DVector<f64>| {
        let mu = if scale_known { 0.0 } else { u[2] * v[2] };
        u[0] * v[0] + u[1] * v[1] - mu
    };
    let konst = if scale_known { -1.0 } else { 0.0 };
    let roots = quadratic_roots(q(&z1, &z1), 2.0 * q(&z0, &z1), q(&z0, &z0) + konst);

    let qq_inv = qq.inverse();
    let mut out = Vec::new();
    for y in roots {
        let z = &z0 + &z1 * y;
        let (c, s, mu) = if scale_known {
            (z[0], z[1], 1.0)
        } else {
            (z[0], z[1], z[2])
        };
        if mu <= 0.0 {
            continue;
        }
        let off = if scale_known { 2 } else { 3 };
        let bn = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, mu);
        let tn = Vector3::new(z[off], z[off + 1], z[off + 2]);
        let (b, t) = fr.restore(&bn, &tn);
        let Some(p) = pose_from_inverse(&b, &t) else {
            continue;
        };
        // Undo the pre-alignment: x̃' = s R' X' + t' with x̃' = Qq x̃, X' = Qm X.
        let r =
            Rotation3::from_matrix_unchecked(qq_inv.matrix() * p.rotation.matrix() * qm.matrix());
        let mut pose = PoseSim3::new(
            if scale_known { 1.0 } else { p.scale },
            r,
            qq_inv * p.translation,
        );
        if scale_known {
            pose.rotation = project_to_rotation(pose.rotation.matrix());
        }
        out.push(pose);
    }
    Ok(out)
}
