use lineloc_core::robust::{Problem, ProblemEstimator};
use lineloc_core::synth::{minimal_instance, minimal_instance_with_rotation, pose_errors};
use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every variant with its camera setup.
fn variants() -> Vec<(Problem, bool)> {
    let mut v = vec![
        (Problem::P3P, false),
        (Problem::P2PU, false),
        (Problem::GP3P, true),
        (Problem::GP2PU, true),
        (Problem::P6LLinear, false),
        (Problem::P6LLinear, true),
        (Problem::P6LMinimal, false),
        (Problem::P6LMinimal, true),
        (Problem::P4LU, false),
        (Problem::P4LU, true),
    ];
    for scale_known in [false, true] {
        for vertical in [false, true] {
            v.push((
                Problem::PointAlign {
                    scale_known,
                    vertical,
                },
                true,
            ));
            v.push((
                Problem::LineAlign {
                    scale_known,
                    vertical,
                },
                true,
            ));
        }
    }
    v
}

struct Stats {
    found: usize,
    failures: usize,
    max_count: usize,
    total_count: usize,
}

fn run(problem: Problem, multi: bool, trials: usize, seed: u64) -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Stats {
        found: 0,
        failures: 0,
        max_count: 0,
        total_count: 0,
    };
    for _ in 0..trials {
        let inst = minimal_instance(problem, multi, &mut rng);
        let est =
            ProblemEstimator::new(problem, &inst.data, &inst.rig, inst.gravity.as_ref()).unwrap();
        let idx: Vec<usize> = (0..problem.sample_size()).collect();
        match est.solve(&idx) {
            Ok(cands) => {
                s.max_count = s.max_count.max(cands.len());
                s.total_count += cands.len();
                if cands.iter().any(|c| {
                    let e = pose_errors(c, &inst.truth);
                    e.dr < 1e-6 && e.dt < 1e-6 * inst.extent
                }) {
                    s.found += 1;
                }
            }
            Err(_) => s.failures += 1,
        }
    }
    s
}

#[test]
fn noiseless_minimal_instances_recover_truth() {
    for (p, multi) in variants() {
        let s = run(p, multi, 100, 11);
        println!(
            "{p} multi={multi}: found {}/100, errors {}, max {} mean {:.2}",
            s.found,
            s.failures,
            s.max_count,
            s.total_count as f64 / 100.0
        );
        assert!(
            s.found >= 99,
            "{p} multi={multi}: truth found in {} of 100",
            s.found
        );
    }
}

/// Upper bounds on the number of returned candidates. The line-to-point
/// problem with known vertical reduces to a sextic, so 6 is its bound here.
fn ceiling(p: Problem) -> usize {
    match p {
        Problem::P3P => 4,
        Problem::P2PU | Problem::GP2PU => 2,
        Problem::GP3P => 8,
        Problem::P6LLinear => 1,
        Problem::P6LMinimal => 64,
        Problem::P4LU => 6,
        Problem::PointAlign { .. } => 1,
        Problem::LineAlign {
            scale_known: true,
            vertical: false,
        } => 8,
        Problem::LineAlign {
            scale_known: true,
            vertical: true,
        } => 2,
        Problem::LineAlign {
            scale_known: false,
            vertical: false,
        } => 16,
        Problem::LineAlign {
            scale_known: false,
            vertical: true,
        } => 4,
    }
}

#[test]
fn candidate_counts_stay_below_ceilings() {
    for (p, multi) in variants() {
        let trials = if p == Problem::P6LMinimal { 30 } else { 300 };
        let s = run(p, multi, trials, 23);
        assert!(
            s.max_count <= ceiling(p),
            "{p} multi={multi}: {} candidates",
            s.max_count
        );
    }
}

#[test]
fn p6l_generic_instance_has_sixty_four_roots() {
    assert_eq!(lineloc_core::solvers::p6l_generic_root_count(), 64);
}

/// Truth rotations of 179.9 degrees about gravity, optionally combined with a
/// tilt of the query frame, are recovered by the gravity-aware solvers.
#[test]
fn gravity_solvers_handle_near_half_turns() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let problems = [
        (Problem::P2PU, false),
        (Problem::GP2PU, true),
        (Problem::P4LU, false),
        (Problem::P4LU, true),
        (
            Problem::PointAlign {
                scale_known: true,
                vertical: true,
            },
            true,
        ),
        (
            Problem::PointAlign {
                scale_known: false,
                vertical: true,
            },
            true,
        ),
        (
            Problem::LineAlign {
                scale_known: true,
                vertical: true,
            },
            true,
        ),
        (
            Problem::LineAlign {
                scale_known: false,
                vertical: true,
            },
            true,
        ),
    ];
    for (p, multi) in problems {
        for k in 0..20 {
            let g = lineloc_core::random_unit_vector(&mut rng);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let half = Rotation3::from_axis_angle(&g, sign * 179.9f64.to_radians());
            let tilt = if k % 4 < 2 {
                Rotation3::identity()
            } else {
                Rotation3::from_scaled_axis(Vector3::new(0.3, -0.2, 0.5))
            };
            let inst = minimal_instance_with_rotation(p, multi, Some((tilt * half, g)), &mut rng);
            let est =
                ProblemEstimator::new(p, &inst.data, &inst.rig, inst.gravity.as_ref()).unwrap();
            let idx: Vec<usize> = (0..p.sample_size()).collect();
            let cands = est.solve(&idx).unwrap_or_default();
            let found = cands.iter().any(|c| {
                let e = pose_errors(c, &inst.truth);
                e.dr < 1e-6 && e.dt < 1e-6 * inst.extent
            });
            assert!(
                found,
                "{p} multi={multi} case {k}: truth missing among {} candidates",
                cands.len()
            );
        }
    }
}
