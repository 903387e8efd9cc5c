//! Minimal and linear pose solvers for point and line targets.
//!
//! Every solver returns all real candidates it finds in a [`SolutionSet`].
//! Candidates that do not satisfy the constraints of the input sample within
//! a normalized residual of 1e-6 are dropped before returning.

mod align;
mod grel;
pub mod homotopy;
mod line_align;
mod p3p;
mod p4l;
mod p6l;
pub mod poly;
mod upright;

pub use align::solve_point_alignment;
pub use grel::solve_grel_linear;
pub use line_align::solve_point_to_line_alignment;
pub use p3p::{solve_gpnp, solve_p3p};
pub use p4l::solve_p4l_u;
pub use p6l::{p6l_generic_root_count, solve_p6l_minimal};
pub use upright::{solve_gpnp_u, solve_p2p_u};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeneralizedRay, GeomError, Observation2D, PluckerLine, RigCalibration, Vec3};

/// Tolerance on the normalized constraint residual of returned candidates.
pub const CANDIDATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
    #[error("rank-deficient linear system (singular value ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("solver needs {needed} correspondences, got {got}")]
    SampleSize { needed: usize, got: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// A 2D observation matched to a map target (a point or a line).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corr2D3D<T> {
    pub observation: Observation2D,
    pub camera_index: usize,
    pub target: T,
}

/// A local 3D point (query frame) matched to a map target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corr3D3D<T> {
    pub local_point: Vec3,
    pub target: T,
}

pub type PointCorr2D = Corr2D3D<Vec3>;
pub type LineCorr2D = Corr2D3D<PluckerLine>;
pub type PointCorr3D = Corr3D3D<Vec3>;
pub type LineCorr3D = Corr3D3D<PluckerLine>;

impl<T> Corr2D3D<T> {
    pub fn new(observation: Observation2D, camera_index: usize, target: T) -> Self {
        Self {
            observation,
            camera_index,
            target,
        }
    }
}

impl<T> Corr3D3D<T> {
    pub fn new(local_point: Vec3, target: T) -> Self {
        Self {
            local_point,
            target,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Largest normalized residual among the returned candidates.
    pub max_residual: f64,
    /// Solver-specific conditioning indicator (e.g. a singular value ratio); 0 if unused.
    pub condition: f64,
    /// Candidates dropped by the residual or cheirality checks.
    pub rejected: usize,
    /// Homotopy paths that neither converged nor diverged cleanly.
    pub failed_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet<P> {
    pub candidates: Vec<P>,
    pub diagnostics: SolverDiagnostics,
}

impl<P> SolutionSet<P> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, P> {
        self.candidates.iter()
    }

    /// Keeps candidates whose residual is at most [`CANDIDATE_TOL`].
    pub(crate) fn filtered<F: Fn(&P) -> f64>(raw: Vec<P>, residual: F) -> Self {
        let mut candidates = Vec::with_capacity(raw.len());
        let mut diagnostics = SolverDiagnostics::default();
        for p in raw {
            let r = residual(&p);
            if r.is_finite() && r <= CANDIDATE_TOL {
                diagnostics.max_residual = diagnostics.max_residual.max(r);
                candidates.push(p);
            } else {
                diagnostics.rejected += 1;
            }
        }
        Self {
            candidates,
            diagnostics,
        }
    }
}

impl<P> IntoIterator for SolutionSet<P> {
    type Item = P;
    type IntoIter = std::vec::IntoIter<P>;
    fn into_iter(self) -> Self::IntoIter {
        self.candidates.into_iter()
    }
}

pub(crate) fn check_size(got: usize, needed: usize) -> Result<(), SolverError> {
    if got < needed {
        return Err(SolverError::SampleSize { needed, got });
    }
    Ok(())
}

/// Body-frame rays of 2D correspondences.
pub(crate) fn rays_of<T>(
    corrs: &[Corr2D3D<T>],
    rig: &RigCalibration,
) -> Result<Vec<GeneralizedRay>, SolverError> {
    corrs
        .iter()
        .map(|c| {
            rig.ray(c.camera_index, &c.observation)
                .map_err(SolverError::from)
        })
        .collect()
}

/// Parameter along the ray of its closest approach to `line`; `None` when parallel.
pub(crate) fn ray_depth_at_line(ray: &GeneralizedRay, line: &PluckerLine) -> Option<f64> {
    let d = ray.direction.into_inner();
    let v = line.direction.into_inner();
    let n = d.cross(&v);
    let nn = n.norm_squared();
    if nn < 1e-18 {
        return None;
    }
    let p = line.closest_point_to_origin();
    Some((p - ray.origin).cross(&v).dot(&n) / nn)
}

/// Unit-free residuals are reported relative to this characteristic length.
pub(crate) fn spread(points: impl Iterator<Item = Vec3>) -> f64 {
    let pts: Vec<Vec3> = points.collect();
    if pts.is_empty() {
        return 1.0;
    }
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let s = (pts.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}
