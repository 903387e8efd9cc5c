//! Pose estimation against 3D line clouds and point clouds.

pub mod attack;
pub mod geom;
pub mod io;
pub mod robust;
pub mod solvers;
pub mod synth;

pub use geom::*;
pub use solvers::{
    solve_gpnp, solve_gpnp_u, solve_grel_linear, solve_p2p_u, solve_p3p, solve_p4l_u,
    solve_p6l_minimal, solve_point_alignment, solve_point_to_line_alignment, Corr2D3D, Corr3D3D,
    LineCorr2D, LineCorr3D, PointCorr2D, PointCorr3D, SolutionSet, SolverDiagnostics, SolverError,
};
