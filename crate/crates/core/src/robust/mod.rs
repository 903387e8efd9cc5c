//! Seeded RANSAC over the pose problems and Levenberg-Marquardt refinement.

mod problem;
mod ransac;
mod refine;

pub use problem::{
    align_line_residual, align_point_residual, data_residual, line_residual, localize,
    point_residual, CorrespondenceSet, DataKind, Problem, ProblemEstimator,
};
pub use ransac::{
    adaptive_iterations, ransac, sample_indices, Estimator, PoseEstimate, RansacConfig,
};
pub use refine::{
    refine_pose, refine_with_reselection, residuals_and_jacobian, retract, CostKind, RefineConfig,
    RefineReport,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobustError {
    #[error("need at least {needed} correspondences, got {got}")]
    NotEnoughCorrespondences { needed: usize, got: usize },
    #[error("no hypothesis reached the minimal inlier count after {iterations} iterations")]
    NoModelFound { iterations: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("unknown method '{0}'")]
    UnknownMethod(String),
    #[error("problem {problem} cannot use {got:?} correspondences")]
    DataKindMismatch { problem: Problem, got: DataKind },
    #[error("cost {0:?} cannot use {1:?} correspondences")]
    CostKindMismatch(CostKind, DataKind),
    #[error("problem {0} requires a gravity prior")]
    MissingGravity(Problem),
}
