use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scene, pose_errors, SceneConfig, SynthError, SyntheticInstance};
use crate::robust::{localize, DataKind, Problem, RansacConfig, RefineConfig, RobustError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepKind {
    /// Levels are pixel noise standard deviations.
    Noise,
    /// Levels are the retained fraction of map entries.
    Density,
}

/// A problem together with the camera setup it is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub problem: Problem,
    /// Use the whole rig of the query instead of its first camera.
    pub multi: bool,
}

impl Method {
    pub fn new(problem: Problem, multi: bool) -> Self {
        let multi = match problem {
            Problem::P3P | Problem::P2PU => false,
            Problem::GP3P
            | Problem::GP2PU
            | Problem::PointAlign { .. }
            | Problem::LineAlign { .. } => true,
            _ => multi,
        };
        Self { problem, multi }
    }

    pub fn label(&self) -> String {
        match self.problem {
            Problem::P6LLinear | Problem::P6LMinimal | Problem::P4LU if self.multi => {
                format!("m-{}", self.problem)
            }
            _ => self.problem.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Base scene; its seed is replaced per trial.
    pub scene: SceneConfig,
    /// RANSAC threshold for the 2D problems, in pixels.
    pub threshold_px: f64,
    /// RANSAC threshold for the 3D problems, in scene units.
    pub threshold_3d: f64,
    pub ransac: RansacConfig,
    pub refine: Option<RefineConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Noise,
            grid: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            methods: vec![
                Method::new(Problem::P3P, false),
                Method::new(Problem::P6LLinear, false),
            ],
            trials: 10,
            seed: 0,
            scene: SceneConfig::default(),
            threshold_px: 4.0,
            threshold_3d: 0.1,
            ransac: RansacConfig::default(),
            refine: Some(RefineConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub method: String,
    pub trial: usize,
    pub dr_deg: f64,
    pub dt: f64,
    pub inlier_ratio: f64,
    pub iterations: usize,
    pub time_ms: f64,
    pub status: String,
}

fn status_code(e: &RobustError) -> &'static str {
    match e {
        RobustError::NotEnoughCorrespondences { .. } => "not_enough_correspondences",
        RobustError::NoModelFound { .. } => "no_model_found",
        RobustError::InvalidConfig(_) => "invalid_config",
        RobustError::UnknownMethod(_) => "unknown_method",
        RobustError::DataKindMismatch { .. } | RobustError::CostKindMismatch(..) => {
            "data_kind_mismatch"
        }
        RobustError::MissingGravity(_) => "missing_gravity",
    }
}

/// Per-trial scene seed.
fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Localizes the first query of `inst` with `method` and scores it.
pub fn evaluate(
    inst: &SyntheticInstance,
    method: &Method,
    cfg: &SweepConfig,
    ransac_seed: u64,
) -> SweepRow {
    let problem = method.problem;
    let query = if method.multi {
        inst.queries[0].clone()
    } else {
        inst.queries[0].single(0)
    };
    let scale_known = !matches!(
        problem,
        Problem::PointAlign {
            scale_known: false,
            ..
        } | Problem::LineAlign {
            scale_known: false,
            ..
        }
    );
    let data = query.correspondences(inst, problem.data_kind(), scale_known);
    let threshold = match problem.data_kind() {
        DataKind::Point2D | DataKind::Line2D => cfg.threshold_px / inst.config.focal,
        _ => cfg.threshold_3d,
    };
    let ransac = RansacConfig {
        threshold,
        seed: ransac_seed,
        ..cfg.ransac
    };
    let start = Instant::now();
    let result = localize(
        problem,
        &data,
        &query.rig,
        Some(&query.gravity),
        &ransac,
        cfg.refine.as_ref(),
    );
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut row = SweepRow {
        level: 0.0,
        method: method.label(),
        trial: 0,
        dr_deg: f64::NAN,
        dt: f64::NAN,
        inlier_ratio: f64::NAN,
        iterations: 0,
        time_ms,
        status: "ok".into(),
    };
    match result {
        Ok(est) => {
            let truth = match problem.data_kind() {
                DataKind::Point2D | DataKind::Line2D => {
                    crate::geom::PoseSim3::from_se3(&query.body_pose)
                }
                _ => query.local_truth(scale_known),
            };
            let e = pose_errors(&est.pose, &truth);
            row.dr_deg = e.dr.to_degrees();
            // For similarities the center is expressed in map units.
            row.dt = e.dt;
            row.inlier_ratio = est.inlier_ratio;
            row.iterations = est.iterations_run;
        }
        Err(e) => row.status = status_code(&e).into(),
    }
    row
}

/// Runs every (level, method, trial) combination. Scenes are shared across
/// methods and generated from the same per-trial seed at every level.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, SynthError> {
    if cfg.methods.is_empty() {
        return Err(SynthError::InvalidSweep("method list is empty"));
    }
    if cfg.grid.is_empty() {
        return Err(SynthError::InvalidSweep("level grid is empty"));
    }
    if cfg.trials == 0 {
        return Err(SynthError::InvalidSweep("trials must be positive"));
    }
    for &l in &cfg.grid {
        let ok = match cfg.kind {
            SweepKind::Noise => l >= 0.0 && l.is_finite(),
            SweepKind::Density => l > 0.0 && l <= 1.0,
        };
        if !ok {
            return Err(SynthError::InvalidSweep("level outside the valid range"));
        }
    }
    cfg.scene.validate()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|l| (0..cfg.trials).map(move |t| (l, t)))
        .collect();
    let mut rows: Vec<((usize, usize, usize), SweepRow)> = jobs
        .par_iter()
        .flat_map_iter(|&(li, trial)| {
            let level = cfg.grid[li];
            let seed = trial_seed(cfg.seed, trial);
            let mut scene = SceneConfig { seed, ..cfg.scene };
            if cfg.kind == SweepKind::Noise {
                scene.pixel_noise_sigma = level;
            }
            let inst = generate_scene(&scene).expect("validated scene");
            let inst = match cfg.kind {
                SweepKind::Density => inst.retained(level, seed ^ 0xD1B5_4A32_D192_ED03),
                SweepKind::Noise => inst,
            };
            cfg.methods
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    let mut row = evaluate(&inst, m, cfg, seed);
                    row.level = level;
                    row.trial = trial;
                    ((li, mi, trial), row)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by_key(|(k, _)| *k);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Tidy CSV, one row per run.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "level",
        "method",
        "trial",
        "dR_deg",
        "dT",
        "inlier_ratio",
        "iterations",
        "time_ms",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.method.clone(),
            r.trial.to_string(),
            r.dr_deg.to_string(),
            r.dt.to_string(),
            r.inlier_ratio.to_string(),
            r.iterations.to_string(),
            format!("{:.3}", r.time_ms),
            r.status.clone(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_method_list_is_rejected() {
        let cfg = SweepConfig {
            methods: vec![],
            ..Default::default()
        };
        assert!(matches!(run_sweep(&cfg), Err(SynthError::InvalidSweep(_))));
    }

    #[test]
    fn labels() {
        assert_eq!(Method::new(Problem::P4LU, true).label(), "m-p4l+u");
        assert_eq!(Method::new(Problem::P3P, true).label(), "p3p");
        assert_eq!(
            Method::new(
                Problem::LineAlign {
                    scale_known: true,
                    vertical: false
                },
                false
            )
            .label(),
            "align-line+s"
        );
    }
}
