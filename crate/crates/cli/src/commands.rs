use std::fs;
use std::path::Path;

use lineloc_core::attack::{
    density_attack, multi_lift_attack, AttackConfig, AttackError, AttackReport,
};
use lineloc_core::io::{
    lift_map, match_correspondences, match_descriptors, parse_gravity, read_map, read_observations,
    read_point_csv, read_rig, write_map, write_map_json, write_observations, write_point_csv,
    write_rig, IoError, LiftOptions, LineCloudMap, MapLines, ObservationInput, PointCloudInput,
    MAGIC,
};
use lineloc_core::robust::{
    localize as run_localize, CorrespondenceSet, DataKind, Problem, RansacConfig, RefineConfig,
    RobustError,
};
use lineloc_core::synth::{
    generate_scene, pose_errors, run_sweep, write_sweep_csv, Method, SceneConfig, SweepConfig,
    SweepKind,
};
use lineloc_core::{Corr3D3D, PoseSE3, PoseSim3, RigCalibration, Vec3};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    AttackArgs, AttackMethod, BenchArgs, Failure, InspectArgs, LiftArgs, LocalizeArgs,
    SweepKindArg, SynthArgs,
};

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<AttackError> for Failure {
    fn from(e: AttackError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<RobustError> for Failure {
    fn from(e: RobustError) -> Self {
        match e {
            RobustError::NoModelFound { .. } | RobustError::NotEnoughCorrespondences { .. } => {
                Failure::Estimation(e.to_string())
            }
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn at(path: &Path, e: impl std::fmt::Display) -> Failure {
    invalid(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| at(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| at(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let s = fs::read_to_string(path).map_err(|e| at(path, e))?;
    serde_json::from_str(&s).map_err(|e| at(path, e))
}

fn quaternion_wxyz(r: &lineloc_core::RotationSO3) -> [f64; 4] {
    let mut q = UnitQuaternion::from_rotation_matrix(r);
    if q.w < 0.0 {
        q = UnitQuaternion::new_unchecked(-q.into_inner());
    }
    [q.w, q.i, q.j, q.k]
}

fn rotation_from_wxyz(q: [f64; 4]) -> Result<lineloc_core::RotationSO3, Failure> {
    let q = Quaternion::new(q[0], q[1], q[2], q[3]);
    if !(q.norm() > 1e-9) {
        return Err(invalid("rotation quaternion has zero length"));
    }
    Ok(UnitQuaternion::from_quaternion(q).to_rotation_matrix())
}

fn vec3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn gravity_string(g: &lineloc_core::GravityPrior) -> String {
    let (a, b) = (g.gravity_map, g.gravity_query);
    format!("{},{},{}/{},{},{}", a.x, a.y, a.z, b.x, b.y, b.z)
}

pub fn lift(args: &LiftArgs) -> Result<(), Failure> {
    let input = read_point_csv(&args.input).map_err(|e| at(&args.input, e))?;
    let options = LiftOptions {
        compact: args.compact,
        allow_relift: args.allow_relift,
    };
    let mut priors: Vec<&Path> = args.prior.iter().map(|p| p.as_path()).collect();
    if args.out.exists() {
        priors.push(&args.out);
    }
    let mut map = None;
    for p in priors {
        let prior = read_map(p).map_err(|e| at(p, e))?;
        map = Some(lift_map(&input, args.seed, options, Some(&prior)).map_err(|e| at(p, e))?);
    }
    let map = match map {
        Some(m) => m,
        None => lift_map(&input, args.seed, options, None)?,
    };
    write_map(&map, &args.out).map_err(|e| at(&args.out, e))?;
    if let Some(j) = &args.json {
        write_map_json(&map, j).map_err(|e| at(j, e))?;
    }
    println!(
        "lifted {} points to {} ({} lines, descriptor dim {})",
        input.points.len(),
        args.out.display(),
        mode_name(&map.lines),
        map.metadata.descriptor_dim
    );
    Ok(())
}

fn mode_name(lines: &MapLines) -> &'static str {
    match lines {
        MapLines::Full(_) => "full",
        MapLines::Compact(_) => "compact",
    }
}

/// Parses a CLI method name; `align` and `align-line` take an optional `+u`.
fn parse_method(name: &str, scale_known: bool) -> Result<Problem, Failure> {
    let (base, vertical) = match name.strip_suffix("+u") {
        Some(b) if b.starts_with("align") => (b, true),
        _ => (name, false),
    };
    Ok(Problem::from_method(base, scale_known, vertical)?)
}

enum LoadedMap {
    Lines(LineCloudMap),
    Points(PointCloudInput),
}

fn load_map(path: &Path) -> Result<LoadedMap, Failure> {
    let bytes = fs::read(path).map_err(|e| at(path, e))?;
    if bytes.starts_with(MAGIC) {
        Ok(LoadedMap::Lines(
            lineloc_core::io::decode_map(&bytes).map_err(|e| at(path, e))?,
        ))
    } else {
        Ok(LoadedMap::Points(
            read_point_csv(path).map_err(|e| at(path, e))?,
        ))
    }
}

/// Ground truth written by `synth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthJson {
    /// Map-to-body rotation, quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    /// Body origin in map coordinates.
    pub center: [f64; 3],
    /// Value for `localize --gravity`.
    pub gravity: String,
    pub scene_extent: f64,
    pub observations: usize,
    pub outliers: usize,
}

#[derive(Debug, Serialize)]
struct PoseJson {
    scale: f64,
    rotation: [f64; 4],
    translation: [f64; 3],
    center: [f64; 3],
}

#[derive(Debug, Serialize)]
struct ErrorsJson {
    rotation_deg: f64,
    translation: f64,
}

#[derive(Debug, Serialize)]
struct LocalizeResult {
    method: String,
    status: String,
    correspondences: usize,
    pose: Option<PoseJson>,
    inliers: usize,
    inlier_ratio: f64,
    iterations: usize,
    final_cost: f64,
    refinement_steps: usize,
    /// Refinement runs repeated after the inlier set changed.
    reselections: usize,
    errors: Option<ErrorsJson>,
}

fn require_descriptors(
    obs: &ObservationInput,
    map_descriptors: &[Vec<f32>],
) -> Result<(), Failure> {
    if obs.descriptors.is_empty() {
        return Err(invalid("query observations carry no descriptors to match"));
    }
    if map_descriptors.is_empty() {
        return Err(invalid("map carries no descriptors to match"));
    }
    Ok(())
}

fn correspondences(
    problem: Problem,
    map: &LoadedMap,
    obs: &ObservationInput,
    rig: &RigCalibration,
    ratio: f64,
) -> Result<CorrespondenceSet, Failure> {
    let kind = problem.data_kind();
    let (descriptors, points, lines) = match (map, problem.uses_lines()) {
        (LoadedMap::Lines(m), true) => (&m.descriptors, Vec::new(), m.plucker_lines()),
        (LoadedMap::Points(p), false) => (&p.descriptors, p.points.clone(), Vec::new()),
        (LoadedMap::Lines(_), false) => {
            return Err(invalid(format!("{problem} needs a point map (CSV)")))
        }
        (LoadedMap::Points(_), true) => {
            return Err(invalid(format!("{problem} needs a line-cloud map")))
        }
    };
    require_descriptors(obs, descriptors)?;
    let normalized = obs.normalized(rig)?;
    let set = match kind {
        DataKind::Point2D => CorrespondenceSet::Points2D(match_correspondences(
            &normalized,
            &obs.cameras,
            &obs.descriptors,
            descriptors,
            &points,
            ratio,
        )?),
        DataKind::Line2D => CorrespondenceSet::Lines2D(match_correspondences(
            &normalized,
            &obs.cameras,
            &obs.descriptors,
            descriptors,
            &lines,
            ratio,
        )?),
        DataKind::Point3D | DataKind::Line3D => {
            if !obs.has_depth() {
                return Err(invalid(format!(
                    "{problem} needs a depth column in the observations"
                )));
            }
            let pairs = match_descriptors(&obs.descriptors, descriptors, ratio)?;
            let local = |q: usize| -> Result<Vec3, Failure> {
                let cam = rig
                    .camera(obs.cameras[q])
                    .map_err(|e| invalid(e.to_string()))?;
                cam.local_point(&normalized[q])
                    .ok_or_else(|| invalid("observation without depth"))
            };
            if kind == DataKind::Point3D {
                let c = pairs
                    .iter()
                    .map(|&(q, m)| Ok(Corr3D3D::new(local(q)?, points[m])))
                    .collect::<Result<_, Failure>>()?;
                CorrespondenceSet::Points3D(c)
            } else {
                let c = pairs
                    .iter()
                    .map(|&(q, m)| Ok(Corr3D3D::new(local(q)?, lines[m])))
                    .collect::<Result<_, Failure>>()?;
                CorrespondenceSet::Lines3D(c)
            }
        }
    };
    Ok(set)
}

pub fn localize(args: &LocalizeArgs) -> Result<(), Failure> {
    let problem = parse_method(&args.method, args.scale_known)?;
    let gravity = args.gravity.as_deref().map(parse_gravity).transpose()?;
    if problem.needs_gravity() && gravity.is_none() {
        return Err(invalid(format!(
            "method {problem} needs --gravity gx,gy,gz/gx,gy,gz"
        )));
    }
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(invalid("--ratio must lie in (0, 1]"));
    }
    let rig = read_rig(&args.rig).map_err(|e| at(&args.rig, e))?;
    let obs = read_observations(&args.query, false).map_err(|e| at(&args.query, e))?;
    let truth: Option<TruthJson> = args.truth.as_deref().map(read_json).transpose()?;
    let map = load_map(&args.map)?;
    let data = correspondences(problem, &map, &obs, &rig, args.ratio)?;

    let threshold = match problem.data_kind() {
        DataKind::Point2D | DataKind::Line2D => {
            let focal = args
                .focal
                .unwrap_or_else(|| rig.cameras()[0].intrinsics.mean_focal());
            if !(focal > 0.0) {
                return Err(invalid("--focal must be positive"));
            }
            args.threshold_px / focal
        }
        _ => args.threshold_3d,
    };
    let ransac = RansacConfig {
        threshold,
        seed: args.seed,
        max_iterations: args.max_iterations,
        ..Default::default()
    };
    let refine = (!args.no_refine).then(RefineConfig::default);
    let outcome = run_localize(
        problem,
        &data,
        &rig,
        gravity.as_ref(),
        &ransac,
        refine.as_ref(),
    );

    let mut result = LocalizeResult {
        method: problem.to_string(),
        status: "ok".into(),
        correspondences: data.len(),
        pose: None,
        inliers: 0,
        inlier_ratio: 0.0,
        iterations: 0,
        final_cost: f64::NAN,
        refinement_steps: 0,
        reselections: 0,
        errors: None,
    };
    match outcome {
        Ok(est) => {
            let p = &est.pose;
            result.pose = Some(PoseJson {
                scale: p.scale,
                rotation: quaternion_wxyz(&p.rotation),
                translation: vec3(&p.translation),
                center: vec3(&p.center()),
            });
            result.inliers = est.num_inliers();
            result.inlier_ratio = est.inlier_ratio;
            result.iterations = est.iterations_run;
            result.final_cost = est.final_cost;
            result.refinement_steps = est.refinement.as_ref().map_or(0, |r| r.accepted_steps);
            result.reselections = est.refinement.as_ref().map_or(0, |r| r.reselections);
            if let Some(t) = &truth {
                let tp = PoseSim3::from_se3(&PoseSE3::new(
                    rotation_from_wxyz(t.rotation)?,
                    Vector3::from(t.translation),
                ));
                let e = pose_errors(p, &tp);
                result.errors = Some(ErrorsJson {
                    rotation_deg: e.dr.to_degrees(),
                    translation: e.dt,
                });
            }
            write_json(&result, &args.out)?;
            println!(
                "{}: {} of {} correspondences are inliers after {} iterations",
                result.method, result.inliers, result.correspondences, result.iterations
            );
            Ok(())
        }
        Err(e) => {
            let failure = Failure::from(e);
            if let Failure::Estimation(m) = &failure {
                result.status = m.clone();
                write_json(&result, &args.out)?;
            }
            Err(failure)
        }
    }
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    if args.rig_size == 0 {
        return Err(invalid("--rig-size must be positive"));
    }
    let config = SceneConfig {
        num_points: args.points,
        num_query_cameras: args.rig_size.max(SceneConfig::default().num_query_cameras),
        rig_size: args.rig_size,
        pixel_noise_sigma: args.noise,
        outlier_ratio: args.outliers,
        focal: args.focal,
        seed: args.seed,
        ..Default::default()
    };
    let inst = generate_scene(&config).map_err(|e| invalid(e.to_string()))?;
    let query = &inst.queries[0];

    // Map descriptors are random; each observation sees its point's
    // descriptor with a small perturbation.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x6c69_6e65_6c6f_6321);
    let dim = args.descriptor_dim;
    let map_desc: Vec<Vec<f32>> = (0..inst.points.len())
        .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
        .collect();
    let mut obs = ObservationInput::default();
    for o in &query.observations {
        let k = query.rig.cameras()[o.camera].intrinsics;
        let px = k.to_pixel(o.observation.x, o.observation.y);
        obs.cameras.push(o.camera);
        obs.pixels.push([px.x, px.y]);
        obs.depths
            .push(o.observation.depth.expect("synthetic depth"));
        if dim > 0 {
            obs.descriptors.push(
                map_desc[o.point]
                    .iter()
                    .map(|v| v + rng.random_range(-0.01f32..0.01))
                    .collect(),
            );
        }
    }
    let points = PointCloudInput {
        points: inst.points.clone(),
        descriptors: if dim > 0 { map_desc } else { Vec::new() },
    };

    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| at(dir, e))?;
    write_point_csv(&points, &dir.join("points.csv"))?;
    write_observations(&obs, &dir.join("query.csv"))?;
    write_rig(&query.rig, &dir.join("rig.json"))?;
    let body = &query.body_pose;
    let truth = TruthJson {
        rotation: quaternion_wxyz(&body.rotation),
        translation: vec3(&body.translation),
        center: vec3(&body.center()),
        gravity: gravity_string(&query.gravity),
        scene_extent: config.scene_extent,
        observations: obs.len(),
        outliers: query.observations.iter().filter(|o| o.outlier).count(),
    };
    write_json(&truth, &dir.join("truth.json"))?;
    println!(
        "wrote {} points and {} observations to {}",
        points.points.len(),
        obs.len(),
        dir.display()
    );
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let methods = args
        .methods
        .iter()
        .map(|m| Ok(Method::new(m.parse::<Problem>()?, args.multi)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let kind = match args.kind {
        SweepKindArg::Noise => SweepKind::Noise,
        SweepKindArg::Density => SweepKind::Density,
    };
    let cfg = SweepConfig {
        kind,
        grid: args.grid.clone(),
        methods,
        trials: args.trials,
        seed: args.seed,
        scene: SceneConfig {
            num_points: args.points,
            outlier_ratio: args.outliers,
            pixel_noise_sigma: args.noise,
            rig_size: args.rig_size,
            num_query_cameras: args.rig_size.max(SceneConfig::default().num_query_cameras),
            ..Default::default()
        },
        threshold_px: args.threshold_px,
        threshold_3d: args.threshold_3d,
        ..Default::default()
    };
    let rows = run_sweep(&cfg).map_err(|e| invalid(e.to_string()))?;
    let file = fs::File::create(&args.out).map_err(|e| at(&args.out, e))?;
    write_sweep_csv(&rows, std::io::BufWriter::new(file)).map_err(|e| at(&args.out, e))?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn attack(args: &AttackArgs) -> Result<(), Failure> {
    let map = read_map(&args.map).map_err(|e| at(&args.map, e))?;
    let lines = map.plucker_lines();
    let mut report: AttackReport = match args.method {
        AttackMethod::Density => {
            if args.second.is_some() {
                return Err(invalid("--second is only used by the multilift attack"));
            }
            let config = AttackConfig {
                pair_radius: args.pair_radius,
                cluster_radius: args.cluster_radius,
                min_cluster_size: args.min_cluster_size,
                bounds: None,
            };
            density_attack(&lines, &config)?
        }
        AttackMethod::Multilift => {
            let path = args
                .second
                .as_deref()
                .ok_or_else(|| invalid("multilift needs --second"))?;
            let other = read_map(path).map_err(|e| at(path, e))?;
            let pairs = if !map.descriptors.is_empty() && !other.descriptors.is_empty() {
                match_descriptors(&map.descriptors, &other.descriptors, args.ratio)?
            } else if map.len() == other.len() {
                (0..map.len()).map(|i| (i, i)).collect()
            } else {
                return Err(invalid(
                    "maps without descriptors must have equal line counts",
                ));
            };
            multi_lift_attack(&lines, &other.plucker_lines(), &pairs)?
        }
    };
    if let Some(t) = &args.truth {
        if !(args.tau > 0.0) {
            return Err(invalid("--tau must be positive"));
        }
        let truth = read_point_csv(t).map_err(|e| at(t, e))?;
        report.score(&truth.points, args.tau);
    }
    write_json(&report, &args.out)?;
    match (report.precision, report.recall) {
        (Some(p), Some(r)) => println!(
            "recovered {} points, precision {p:.4}, recall {r:.4}",
            report.points.len()
        ),
        _ => println!("recovered {} points", report.points.len()),
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectSummary<'a> {
    version: u32,
    mode: &'static str,
    lines: usize,
    descriptor_dim: u32,
    input_digest: Option<&'a str>,
    lift_digest: Option<&'a str>,
}

pub fn inspect(args: &InspectArgs) -> Result<(), Failure> {
    let map = read_map(&args.map).map_err(|e| at(&args.map, e))?;
    let m = &map.metadata;
    let s = InspectSummary {
        version: m.version,
        mode: mode_name(&map.lines),
        lines: map.len(),
        descriptor_dim: m.descriptor_dim,
        input_digest: m.input_digest.as_deref(),
        lift_digest: m.lift_digest.as_deref(),
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&s).map_err(|e| invalid(e.to_string()))?
        );
    } else {
        println!("version: {}", s.version);
        println!("mode: {}", s.mode);
        println!("lines: {}", s.lines);
        println!("descriptor_dim: {}", s.descriptor_dim);
        println!("input_digest: {}", s.input_digest.unwrap_or("none"));
        println!("lift_digest: {}", s.lift_digest.unwrap_or("none"));
    }
    Ok(())
}
