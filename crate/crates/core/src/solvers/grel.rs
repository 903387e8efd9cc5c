//! Linear solver for the ray-line incidence constraint
//! `dᵀ E v + dᵀ R w + (c × d)ᵀ R v = 0`, `E = [T]× R`.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{check_size, rays_of, spread, LineCorr2D, SolutionSet, SolverDiagnostics, SolverError};
use crate::geom::{
    project_to_rotation, ray_line_incidence, GeneralizedRay, PluckerLine, PoseSE3, RigCalibration,
    Vec3, SVD_MAX_ITER,
};

/// Map lines re-expressed in a centered, unit-spread frame. A rigid pose
/// estimated in that frame converts back with [`Normalization::restore`].
pub(crate) struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn of_lines(lines: &[PluckerLine]) -> Self {
        let pts: Vec<Vec3> = lines.iter().map(|l| l.closest_point_to_origin()).collect();
        let center = pts.iter().sum::<Vec3>() / pts.len() as f64;
        let scale = spread(pts.into_iter());
        Self { center, scale }
    }

    pub fn line(&self, l: &PluckerLine) -> PluckerLine {
        let p = (l.closest_point_to_origin() - self.center) / self.scale;
        PluckerLine::through_point(&p, &l.direction)
    }

    pub fn ray(&self, r: &GeneralizedRay) -> GeneralizedRay {
        GeneralizedRay::new(r.origin / self.scale, r.direction)
    }

    /// Pose in normalized frames back to the original ones.
    pub fn restore(&self, p: &PoseSE3) -> PoseSE3 {
        // y/σ = R (x - m)/σ + T_n  =>  y = R x + σ T_n - R m.
        PoseSE3::new(
            p.rotation,
            p.translation * self.scale - p.rotation * self.center,
        )
    }
}

/// Normalized incidence residual of a pose on a set of ray-line pairs.
pub(crate) fn incidence_residual(
    p: &PoseSE3,
    rays: &[GeneralizedRay],
    lines: &[PluckerLine],
    scale: f64,
) -> f64 {
    rays.iter()
        .zip(lines)
        .map(|(r, l)| ray_line_incidence(p, r, l).abs() / scale)
        .fold(0.0, f64::max)
}

/// Least-squares translation given the rotation: each pair gives
/// `T · (R v × d) = -(dᵀ R w + (c × d)ᵀ R v)`.
pub(crate) fn translation_given_rotation(
    r: &Matrix3<f64>,
    rays: &[GeneralizedRay],
    lines: &[PluckerLine],
) -> Option<Vec3> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (ray, l) in rays.iter().zip(lines) {
        let d = ray.direction.into_inner();
        let rv = r * l.direction.into_inner();
        let a = rv.cross(&d);
        let b = -(d.dot(&(r * l.moment)) + ray.moment().dot(&rv));
        ata += a * a.transpose();
        atb += a * b;
    }
    ata.cholesky().map(|c| c.solve(&atb))
}

/// Pose from at least 17 ray-line pairs via the null vector of the linear
/// incidence system in the 18 entries of (E, R).
pub fn solve_grel_linear(
    corrs: &[LineCorr2D],
    rig: &RigCalibration,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    check_size(corrs.len(), 17)?;
    let raw_rays = rays_of(corrs, rig)?;
    let raw_lines: Vec<PluckerLine> = corrs.iter().map(|c| c.target).collect();
    let norm = Normalization::of_lines(&raw_lines);
    let rays: Vec<GeneralizedRay> = raw_rays.iter().map(|r| norm.ray(r)).collect();
    let lines: Vec<PluckerLine> = raw_lines.iter().map(|l| norm.line(l)).collect();

    let n = rays.len();
    let mut a = DMatrix::<f64>::zeros(n.max(18), 18);
    for (k, (ray, l)) in rays.iter().zip(&lines).enumerate() {
        let d = ray.direction.into_inner();
        let cd = ray.moment();
        let v = l.direction.into_inner();
        let w = l.moment;
        for i in 0..3 {
            for j in 0..3 {
                a[(k, 3 * i + j)] = d[i] * v[j];
                a[(k, 9 + 3 * i + j)] = d[i] * w[j] + cd[i] * v[j];
            }
        }
        let rn = a.row(k).norm();
        if rn > 0.0 {
            a.row_mut(k).scale_mut(1.0 / rn);
        }
    }
    let svd = a
        .try_svd(false, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| SolverError::NumericalFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let sv = &svd.singular_values;
    // Singular values are sorted in descending order.
    let ratio = sv[16] / sv[0];
    if ratio < 1e-8 {
        return Err(SolverError::RankDeficient(ratio));
    }
    let x = v_t.row(17).transpose();
    let mut rm = Matrix3::from_fn(|i, j| x[9 + 3 * i + j]);
    let det = rm.determinant();
    if det.abs() < 1e-300 {
        return Err(SolverError::RankDeficient(0.0));
    }
    rm /= det.signum() * det.abs().cbrt();
    let rot = project_to_rotation(&rm);
    let t = translation_given_rotation(rot.matrix(), &rays, &lines)
        .ok_or(SolverError::RankDeficient(0.0))?;
    let pose = norm.restore(&PoseSE3::new(rot, t));

    // A linear estimate: returned even on noisy data, with its residual reported.
    Ok(SolutionSet {
        candidates: vec![pose],
        diagnostics: SolverDiagnostics {
            max_residual: incidence_residual(&pose, &raw_rays, &raw_lines, norm.scale),
            condition: ratio,
            ..Default::default()
        },
    })
}
