//! Minimal solver for six ray-line incidences (up to 64 poses).
//!
//! The rotation is parametrized by Cayley coordinates `s`, with
//! `(1 + sᵀs) R = (1 - sᵀs) I + 2 [s]× + 2 s sᵀ`. Each incidence is then
//! quadratic in `s` and affine in `T`. A generic complex instance is solved
//! once by tracking the 160 paths of a multihomogeneous start system in
//! `(s, T)`; every solve is a parameter homotopy from its roots.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, Vector3, Vector6};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use super::grel::{incidence_residual, Normalization};
use super::homotopy::{real_part, solve, CMat, CVec, Homotopy, PathEnd, System, TrackerOptions};
use super::{ray_depth_at_line, rays_of, LineCorr2D, SolutionSet, SolverError};
use crate::geom::{skew, GeneralizedRay, PluckerLine, PoseSE3, RigCalibration};

const MONOMIALS: usize = 10;

/// The unnormalized Cayley matrix split by monomials
/// `[1, s1, s2, s3, s1², s2², s3², s1 s2, s1 s3, s2 s3]`.
fn cayley_basis() -> [Matrix3<f64>; MONOMIALS] {
    let e = [Vector3::x(), Vector3::y(), Vector3::z()];
    let id = Matrix3::identity();
    let sq = |i: usize| -id + 2.0 * e[i] * e[i].transpose();
    let mixed = |i: usize, j: usize| 2.0 * (e[i] * e[j].transpose() + e[j] * e[i].transpose());
    [
        id,
        2.0 * skew(&e[0]),
        2.0 * skew(&e[1]),
        2.0 * skew(&e[2]),
        sq(0),
        sq(1),
        sq(2),
        mixed(0, 1),
        mixed(0, 2),
        mixed(1, 2),
    ]
}

pub(crate) fn cayley_rotation(s: &Vector3<f64>) -> Matrix3<f64> {
    let n = s.norm_squared();
    ((1.0 - n) * Matrix3::identity() + 2.0 * skew(s) + 2.0 * s * s.transpose()) / (1.0 + n)
}

fn monomials<T: nalgebra::ComplexField<RealField = f64> + Copy>(s: &[T; 3]) -> [T; MONOMIALS] {
    let one = T::one();
    [
        one,
        s[0],
        s[1],
        s[2],
        s[0] * s[0],
        s[1] * s[1],
        s[2] * s[2],
        s[0] * s[1],
        s[0] * s[2],
        s[1] * s[2],
    ]
}

/// Derivatives of the monomials with respect to `s_j`.
fn monomial_grad<T: nalgebra::ComplexField<RealField = f64> + Copy>(
    s: &[T; 3],
    j: usize,
) -> [T; MONOMIALS] {
    let z = T::zero();
    let one = T::one();
    let two = one + one;
    let mut g = [z; MONOMIALS];
    g[1 + j] = one;
    g[4 + j] = two * s[j];
    match j {
        0 => {
            g[7] = s[1];
            g[8] = s[2];
        }
        1 => {
            g[7] = s[0];
            g[9] = s[2];
        }
        _ => {
            g[8] = s[0];
            g[9] = s[1];
        }
    }
    g
}

/// Incidence equations `μ(s)ᵀ C_i [T; 1] = 0`.
#[derive(Clone)]
struct Incidences<T: nalgebra::Scalar> {
    coeffs: [SMatrix<T, MONOMIALS, 4>; 6],
}

impl Incidences<f64> {
    fn new(rays: &[GeneralizedRay], lines: &[PluckerLine]) -> Self {
        let basis = cayley_basis();
        let mut coeffs = [SMatrix::<f64, MONOMIALS, 4>::zeros(); 6];
        for (i, (ray, l)) in rays.iter().zip(lines).enumerate() {
            let d = ray.direction.into_inner();
            let cd = ray.moment();
            for (m, b) in basis.iter().enumerate() {
                let u = b * l.direction.into_inner();
                let a = u.cross(&d);
                for k in 0..3 {
                    coeffs[i][(m, k)] = a[k];
                }
                coeffs[i][(m, 3)] = d.dot(&(b * l.moment)) + cd.dot(&u);
            }
            let n = coeffs[i].norm();
            if n > 0.0 {
                coeffs[i] /= n;
            }
        }
        Self { coeffs }
    }

    fn to_complex(&self) -> Incidences<Complex64> {
        Incidences {
            coeffs: std::array::from_fn(|i| self.coeffs[i].map(Complex64::from)),
        }
    }
}

impl Incidences<Complex64> {
    /// Incidences of random complex rays and lines satisfying the Plücker
    /// constraints, so the instance is generic within the problem family.
    fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cvec = || {
            CVec::<3>::from_fn(|_, _| {
                Complex64::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
        };
        let basis = cayley_basis();
        let coeffs = std::array::from_fn(|_| {
            let (d, c) = (cvec(), cvec());
            let (ld, lp) = (cvec(), cvec());
            let cd = c.cross(&d);
            let lm = lp.cross(&ld);
            let mut out = SMatrix::<Complex64, MONOMIALS, 4>::zeros();
            for (m, b) in basis.iter().enumerate() {
                let b = b.map(Complex64::from);
                let u = b * ld;
                let a = u.cross(&d);
                for k in 0..3 {
                    out[(m, k)] = a[k];
                }
                out[(m, 3)] = d.dot(&(b * lm)) + cd.dot(&u);
            }
            out
        });
        Self { coeffs }
    }
}

impl<T: nalgebra::ComplexField<RealField = f64> + Copy> Incidences<T> {
    fn eval_generic(&self, x: &[T; 6]) -> ([T; 6], [[T; 6]; 6]) {
        let s = [x[0], x[1], x[2]];
        let mu = monomials(&s);
        let grads = [
            monomial_grad(&s, 0),
            monomial_grad(&s, 1),
            monomial_grad(&s, 2),
        ];
        let mut f = [T::zero(); 6];
        let mut jac = [[T::zero(); 6]; 6];
        for i in 0..6 {
            let c = &self.coeffs[i];
            // q_m = C_i[m, :] · [T; 1]
            let mut q = [T::zero(); MONOMIALS];
            for (m, qm) in q.iter_mut().enumerate() {
                *qm = c[(m, 3)] + x[3] * c[(m, 0)] + x[4] * c[(m, 1)] + x[5] * c[(m, 2)];
            }
            let mut fi = T::zero();
            for m in 0..MONOMIALS {
                fi += mu[m] * q[m];
            }
            f[i] = fi;
            for j in 0..3 {
                let mut g = T::zero();
                for m in 0..MONOMIALS {
                    g += grads[j][m] * q[m];
                }
                jac[i][j] = g;
            }
            for k in 0..3 {
                let mut g = T::zero();
                for m in 0..MONOMIALS {
                    g += mu[m] * c[(m, k)];
                }
                jac[i][3 + k] = g;
            }
        }
        (f, jac)
    }
}

impl System<6> for Incidences<Complex64> {
    fn eval(&self, x: &CVec<6>) -> CVec<6> {
        let (f, _) = self.eval_generic(&[x[0], x[1], x[2], x[3], x[4], x[5]]);
        CVec::<6>::from_column_slice(&f)
    }

    fn jacobian(&self, x: &CVec<6>) -> CMat<6> {
        let (_, j) = self.eval_generic(&[x[0], x[1], x[2], x[3], x[4], x[5]]);
        CMat::<6>::from_fn(|r, c| j[r][c])
    }
}

/// Roots of a generic complex instance, found once from the 160-path
/// multihomogeneous start system. Each solve then tracks only these paths.
struct GenericInstance {
    system: Incidences<Complex64>,
    roots: Vec<CVec<6>>,
}

fn generic_instance() -> &'static GenericInstance {
    static CELL: OnceLock<GenericInstance> = OnceLock::new();
    CELL.get_or_init(|| {
        let system = Incidences::random(0x5851_f42d_4c95_7f2d);
        let start = StartSystem::new(0x9e37_79b9_7f4a_7c15);
        let homotopy = Homotopy {
            target: &system,
            start: &start,
            gamma: Complex64::from_polar(1.0, 2.1741),
        };
        let opts = TrackerOptions::default();
        let mut roots: Vec<CVec<6>> = Vec::new();
        for x0 in start.roots() {
            if let PathEnd::Finite(x) = homotopy.track(&x0, &opts) {
                let scale = 1.0 + x.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let close = |q: &CVec<6>| {
                    q.iter()
                        .zip(x.iter())
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                        < 1e-8 * scale
                };
                if system.eval(&x).iter().all(|z| z.norm() < 1e-9) && !roots.iter().any(close) {
                    roots.push(x);
                }
            }
        }
        GenericInstance { system, roots }
    })
}

/// Number of isolated solutions of a generic instance.
pub fn p6l_generic_root_count() -> usize {
    generic_instance().roots.len()
}

/// `G_i = L_i1(s) L_i2(s) K_i(T)` with random complex affine factors.
struct StartSystem {
    // [factor][equation]: (linear coefficients, constant)
    ls: [[([Complex64; 3], Complex64); 6]; 2],
    ks: [([Complex64; 3], Complex64); 6],
}

fn affine(coef: &([Complex64; 3], Complex64), x: &[Complex64]) -> Complex64 {
    coef.0[0] * x[0] + coef.0[1] * x[1] + coef.0[2] * x[2] + coef.1
}

impl StartSystem {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = || {
            Complex64::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            )
        };
        let mut form = || ([c(), c(), c()], c());
        let ls = [
            std::array::from_fn(|_| form()),
            std::array::from_fn(|_| form()),
        ];
        let ks = std::array::from_fn(|_| form());
        Self { ls, ks }
    }

    /// All 160 roots: three equations vanish through an s-factor (which
    /// fixes s), the other three through their T-factor (which fixes T).
    fn roots(&self) -> Vec<CVec<6>> {
        let mut out = Vec::with_capacity(160);
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let s_eqs = [a, b, c];
                    let t_eqs: Vec<usize> = (0..6).filter(|i| !s_eqs.contains(i)).collect();
                    let t = solve3(&t_eqs.iter().map(|&i| self.ks[i]).collect::<Vec<_>>());
                    for choice in 0..8 {
                        let forms: Vec<_> = s_eqs
                            .iter()
                            .enumerate()
                            .map(|(k, &i)| self.ls[(choice >> k) & 1][i])
                            .collect();
                        let s = solve3(&forms);
                        if let (Some(s), Some(t)) = (s, t) {
                            out.push(CVec::<6>::new(s[0], s[1], s[2], t[0], t[1], t[2]));
                        }
                    }
                }
            }
        }
        out
    }
}

fn solve3(forms: &[([Complex64; 3], Complex64)]) -> Option<[Complex64; 3]> {
    let a = CMat::<3>::from_fn(|r, c| forms[r].0[c]);
    let b = CVec::<3>::from_fn(|r, _| -forms[r].1);
    let x = solve(&a, &b)?;
    Some([x[0], x[1], x[2]])
}

impl System<6> for StartSystem {
    fn eval(&self, x: &CVec<6>) -> CVec<6> {
        let s = [x[0], x[1], x[2]];
        let t = [x[3], x[4], x[5]];
        CVec::<6>::from_fn(|i, _| {
            affine(&self.ls[0][i], &s) * affine(&self.ls[1][i], &s) * affine(&self.ks[i], &t)
        })
    }

    fn jacobian(&self, x: &CVec<6>) -> CMat<6> {
        let s = [x[0], x[1], x[2]];
        let t = [x[3], x[4], x[5]];
        let mut j = CMat::<6>::zeros();
        for i in 0..6 {
            let l1 = affine(&self.ls[0][i], &s);
            let l2 = affine(&self.ls[1][i], &s);
            let k = affine(&self.ks[i], &t);
            for c in 0..3 {
                j[(i, c)] = (self.ls[0][i].0[c] * l2 + l1 * self.ls[1][i].0[c]) * k;
                j[(i, 3 + c)] = l1 * l2 * self.ks[i].0[c];
            }
        }
        j
    }
}

/// Real Newton polish of an approximate root.
fn polish(sys: &Incidences<f64>, x: &Vector6<f64>) -> Vector6<f64> {
    let mut x = *x;
    for _ in 0..6 {
        let (f, j) = sys.eval_generic(&[x[0], x[1], x[2], x[3], x[4], x[5]]);
        let fv = Vector6::from_column_slice(&f);
        let jm = Matrix6::from_fn(|r, c| j[r][c]);
        let Some(dx) = jm.lu().solve(&fv) else { break };
        x -= dx;
        if dx.norm() < 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

fn duplicate(a: &SVector<f64, 6>, b: &SVector<f64, 6>) -> bool {
    (a - b).norm() < 1e-7 * (1.0 + a.norm())
}

/// All real poses satisfying six ray-line incidences. Candidates whose
/// rays meet their line behind the ray origin are discarded.
pub fn solve_p6l_minimal(
    corrs: &[LineCorr2D],
    rig: &RigCalibration,
) -> Result<SolutionSet<PoseSE3>, SolverError> {
    if corrs.len() != 6 {
        return Err(SolverError::SampleSize {
            needed: 6,
            got: corrs.len(),
        });
    }
    let raw_rays = rays_of(corrs, rig)?;
    let raw_lines: Vec<PluckerLine> = corrs.iter().map(|c| c.target).collect();
    for i in 0..6 {
        for j in i + 1..6 {
            let same_ray = (raw_rays[i].origin - raw_rays[j].origin).norm() < 1e-12
                && raw_rays[i].direction.cross(&raw_rays[j].direction).norm() < 1e-12;
            let same_line = raw_lines[i].direction.cross(&raw_lines[j].direction).norm() < 1e-12
                && raw_lines[i]
                    .closest_point_to_origin()
                    .metric_distance(&raw_lines[j].closest_point_to_origin())
                    < 1e-12 * (1.0 + raw_lines[i].moment.norm());
            if same_ray && same_line {
                return Err(SolverError::DegenerateSample("repeated correspondence"));
            }
        }
    }
    let norm = Normalization::of_lines(&raw_lines);
    let rays: Vec<GeneralizedRay> = raw_rays.iter().map(|r| norm.ray(r)).collect();
    let lines: Vec<PluckerLine> = raw_lines.iter().map(|l| norm.line(l)).collect();

    let target = Incidences::new(&rays, &lines);
    let target_c = target.to_complex();
    let generic = generic_instance();
    let homotopy = Homotopy {
        target: &target_c,
        start: &generic.system,
        gamma: Complex64::from_polar(1.0, 0.8313),
    };
    let opts = TrackerOptions::default();
    let mut failed = 0;
    let mut roots: Vec<Vector6<f64>> = Vec::new();
    for x0 in &generic.roots {
        let x0 = *x0;
        match homotopy.track(&x0, &opts) {
            PathEnd::Finite(x) => {
                if let Some(r) = real_part(&x, 1e-6) {
                    let r = polish(&target, &r);
                    if !roots.iter().any(|q| duplicate(q, &r)) {
                        roots.push(r);
                    }
                }
            }
            PathEnd::Diverged => {}
            PathEnd::Failed => failed += 1,
        }
    }

    let mut rejected = 0;
    let mut poses = Vec::new();
    for r in roots {
        let s = Vector3::new(r[0], r[1], r[2]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(cayley_rotation(&s));
        let pose_n = PoseSE3::new(rot, Vector3::new(r[3], r[4], r[5]));
        let in_front = rays.iter().zip(&lines).all(|(ray, l)| {
            let body_line = l.transformed(&crate::geom::PoseSim3::from_se3(&pose_n));
            ray_depth_at_line(ray, &body_line).is_none_or(|t| t > 0.0)
        });
        if !in_front {
            rejected += 1;
            continue;
        }
        poses.push(norm.restore(&pose_n));
    }
    let mut set = SolutionSet::filtered(poses, |p| {
        incidence_residual(p, &raw_rays, &raw_lines, norm.scale)
    });
    set.diagnostics.rejected += rejected;
    set.diagnostics.failed_paths = failed;
    if set.is_empty() && failed > 0 {
        return Err(SolverError::NumericalFailure(format!(
            "{failed} of {} paths failed",
            generic.roots.len()
        )));
    }
    Ok(set)
}
