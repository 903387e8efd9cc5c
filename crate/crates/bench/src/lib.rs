//! Fixtures shared by the criterion benches.

use lineloc_core::robust::{CorrespondenceSet, Problem};
use lineloc_core::synth::{
    generate_scene, minimal_instance, MinimalInstance, SceneConfig, SynthQuery, SyntheticInstance,
};
use lineloc_core::{lift_point, PluckerLine, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every solver configuration, labelled as on the command line.
pub fn solver_variants() -> Vec<(&'static str, Problem, bool)> {
    let align = |scale_known, vertical| Problem::PointAlign {
        scale_known,
        vertical,
    };
    let line_align = |scale_known, vertical| Problem::LineAlign {
        scale_known,
        vertical,
    };
    vec![
        ("p3p", Problem::P3P, false),
        ("p2p+u", Problem::P2PU, false),
        ("gpnp", Problem::GP3P, true),
        ("gpnp+u", Problem::GP2PU, true),
        ("p6l", Problem::P6LLinear, true),
        ("p6l-min", Problem::P6LMinimal, true),
        ("p4l+u", Problem::P4LU, false),
        ("align+s", align(true, false), false),
        ("align", align(false, false), false),
        ("align+u", align(false, true), false),
        ("align+u+s", align(true, true), false),
        ("align-line+s", line_align(true, false), false),
        ("align-line", line_align(false, false), false),
        ("align-line+u", line_align(false, true), false),
        ("align-line+u+s", line_align(true, true), false),
    ]
}

/// `count` noiseless minimal instances of one problem.
pub fn minimal_set(problem: Problem, multi: bool, count: usize, seed: u64) -> Vec<MinimalInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| minimal_instance(problem, multi, &mut rng))
        .collect()
}

/// Default-sized scene with 1 px noise and the given outlier ratio.
pub fn scene(seed: u64, outlier_ratio: f64) -> SyntheticInstance {
    generate_scene(&SceneConfig {
        pixel_noise_sigma: 1.0,
        outlier_ratio,
        seed,
        ..Default::default()
    })
    .expect("valid scene config")
}

/// Correspondences of the first camera of the first query.
pub fn single_camera_data(
    inst: &SyntheticInstance,
    problem: Problem,
) -> (SynthQuery, CorrespondenceSet) {
    let q = inst.queries[0].single(0);
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
    let data = q.correspondences(inst, problem.data_kind(), scale_known);
    (q, data)
}

pub fn uniform_points(n: usize, half: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-half..half)))
        .collect()
}

pub fn lift_all(points: &[Vec3], seed: u64) -> Vec<PluckerLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.iter().map(|p| lift_point(p, &mut rng)).collect()
}

pub fn descriptors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect()
}
