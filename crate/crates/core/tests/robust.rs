use lineloc_core::robust::{
    data_residual, localize, refine_pose, refine_with_reselection, residuals_and_jacobian, retract,
    CostKind, DataKind, Estimator, PoseEstimate, Problem, ProblemEstimator, RansacConfig,
    RefineConfig,
};
use lineloc_core::synth::{
    evaluate, generate_scene, minimal_instance, pose_errors, Method, SceneConfig, SweepConfig,
};
use lineloc_core::PoseSim3;
use nalgebra::{DVector, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturb<R: Rng>(
    pose: &PoseSim3,
    rng: &mut R,
    angle: f64,
    shift: f64,
    log_scale: f64,
) -> PoseSim3 {
    let axis = lineloc_core::random_unit_vector(rng);
    let dir = lineloc_core::random_unit_vector(rng);
    let r = Rotation3::from_axis_angle(&axis, angle) * pose.rotation;
    PoseSim3::new(
        pose.scale * log_scale.exp(),
        r,
        pose.translation + dir.into_inner() * shift,
    )
}

fn kind_problems() -> Vec<(CostKind, Problem)> {
    vec![
        (CostKind::Point, Problem::GP3P),
        (CostKind::Line, Problem::P6LLinear),
        (
            CostKind::AlignPoint { scale_known: true },
            Problem::PointAlign {
                scale_known: true,
                vertical: false,
            },
        ),
        (
            CostKind::AlignPoint { scale_known: false },
            Problem::PointAlign {
                scale_known: false,
                vertical: false,
            },
        ),
        (
            CostKind::AlignLine { scale_known: true },
            Problem::LineAlign {
                scale_known: true,
                vertical: false,
            },
        ),
        (
            CostKind::AlignLine { scale_known: false },
            Problem::LineAlign {
                scale_known: false,
                vertical: false,
            },
        ),
    ]
}

#[test]
fn jacobians_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut checked = 0;
    for (kind, problem) in kind_problems() {
        let mut done = 0;
        while done < 20 {
            let inst = minimal_instance(problem, true, &mut rng);
            let pose = perturb(
                &inst.truth,
                &mut rng,
                0.05,
                0.1,
                if kind.dof() == 7 { 0.05 } else { 0.0 },
            );
            let idx: Vec<usize> = (0..inst.data.len()).collect();
            let Some((_, j)) = residuals_and_jacobian(kind, &pose, &inst.data, &inst.rig, &idx)
            else {
                continue;
            };
            let mut fd = j.clone() * 0.0;
            let mut ok = true;
            for k in 0..kind.dof() {
                let mut d = DVector::zeros(kind.dof());
                d[k] = h;
                let plus =
                    residuals_and_jacobian(kind, &retract(&pose, &d), &inst.data, &inst.rig, &idx);
                let minus = residuals_and_jacobian(
                    kind,
                    &retract(&pose, &(-d)),
                    &inst.data,
                    &inst.rig,
                    &idx,
                );
                let (Some((rp, _)), Some((rm, _))) = (plus, minus) else {
                    ok = false;
                    break;
                };
                fd.set_column(k, &((rp - rm) / (2.0 * h)));
            }
            if !ok {
                continue;
            }
            let rel = (&j - &fd).norm() / fd.norm().max(1e-8);
            assert!(rel < 1e-4, "{kind:?}: relative Jacobian error {rel:e}");
            done += 1;
            checked += 1;
        }
    }
    assert_eq!(checked, 120);
}

fn scene_estimate(
    problem: Problem,
    noise: f64,
    seed: u64,
) -> (
    lineloc_core::robust::CorrespondenceSet,
    lineloc_core::RigCalibration,
    PoseSim3,
) {
    let inst = generate_scene(&SceneConfig {
        num_points: 400,
        pixel_noise_sigma: noise,
        seed,
        ..Default::default()
    })
    .unwrap();
    let q = &inst.queries[0];
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
    let data = q.correspondences(&inst, problem.data_kind(), scale_known);
    let truth = match problem.data_kind() {
        DataKind::Point2D | DataKind::Line2D => PoseSim3::from_se3(&q.body_pose),
        _ => q.local_truth(scale_known),
    };
    (data, q.rig.clone(), truth)
}

fn start(pose: PoseSim3, n: usize, threshold: f64) -> PoseEstimate<PoseSim3> {
    PoseEstimate {
        pose,
        inlier_mask: vec![true; n],
        iterations_run: 0,
        inlier_ratio: 1.0,
        final_cost: 0.0,
        threshold,
        refinement: None,
    }
}

#[test]
fn refinement_converges_from_small_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (kind, problem) in kind_problems() {
        for seed in 0..5 {
            let (data, rig, truth) = scene_estimate(problem, 0.0, seed);
            let s = if kind.dof() == 7 {
                0.02f64.ln_1p()
            } else {
                0.0
            };
            let init = perturb(
                &truth,
                &mut rng,
                2f64.to_radians(),
                0.02 * truth.center().norm(),
                s,
            );
            let est = refine_pose(
                &start(init, data.len(), f64::INFINITY),
                &data,
                &rig,
                kind,
                &RefineConfig::default(),
            )
            .unwrap();
            let e = pose_errors(&est.pose, &truth);
            assert!(
                e.dr < 1e-7 && e.dt < 1e-6,
                "{kind:?} seed {seed}: dr {:e} dt {:e}",
                e.dr,
                e.dt
            );
            let report = est.refinement.unwrap();
            assert!(report.cost_history.windows(2).all(|w| w[1] < w[0]));
            if kind.dof() == 7 {
                assert!((est.pose.scale - truth.scale).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn refinement_leaves_exact_pose_in_place() {
    for (kind, problem) in kind_problems() {
        let (data, rig, truth) = scene_estimate(problem, 0.0, 1);
        let est = refine_pose(
            &start(truth, data.len(), f64::INFINITY),
            &data,
            &rig,
            kind,
            &RefineConfig::default(),
        )
        .unwrap();
        let e = pose_errors(&est.pose, &truth);
        assert!(
            e.dr < 1e-9 && e.dt < 1e-9,
            "{kind:?}: moved by {:e} / {:e}",
            e.dr,
            e.dt
        );
        assert!(est.final_cost < 1e-18);
    }
}

#[test]
fn refinement_rejects_mismatched_cost() {
    let (data, rig, truth) = scene_estimate(Problem::P3P, 0.0, 1);
    let r = refine_pose(
        &start(truth, data.len(), 1.0),
        &data,
        &rig,
        CostKind::Line,
        &RefineConfig::default(),
    );
    assert!(r.is_err());
}

#[test]
fn localization_is_independent_of_thread_count() {
    let (data, rig, _) = scene_estimate(Problem::GP3P, 1.0, 4);
    let cfg = RansacConfig {
        threshold: 4.0 / 500.0,
        seed: 17,
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            localize(
                Problem::GP3P,
                &data,
                &rig,
                None,
                &cfg,
                Some(&RefineConfig::default()),
            )
            .unwrap()
        })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.inlier_mask, b.inlier_mask);
    assert_eq!(a.iterations_run, b.iterations_run);
    assert_eq!(a.pose.rotation.matrix(), b.pose.rotation.matrix());
    assert_eq!(a.pose.translation, b.pose.translation);
}

#[test]
fn ransac_survives_thirty_percent_outliers() {
    let cfg = SweepConfig::default();
    for problem in [
        Problem::P3P,
        Problem::P6LLinear,
        Problem::P4LU,
        Problem::LineAlign {
            scale_known: true,
            vertical: false,
        },
    ] {
        let method = Method::new(problem, false);
        let mut ok = 0;
        for seed in 0..6 {
            let inst = generate_scene(&SceneConfig {
                pixel_noise_sigma: 1.0,
                outlier_ratio: 0.3,
                seed,
                ..Default::default()
            })
            .unwrap();
            let row = evaluate(&inst, &method, &cfg, seed);
            if row.dr_deg < 1.0 && row.dt < 0.01 * inst.config.scene_extent {
                ok += 1;
            }
        }
        assert!(ok >= 5, "{problem}: {ok} of 6");
    }
}

#[test]
fn known_center_is_recovered_with_no_noise() {
    let (data, rig, truth) = scene_estimate(Problem::P6LLinear, 0.0, 2);
    let cfg = RansacConfig::default();
    let est = localize(
        Problem::P6LLinear,
        &data,
        &rig,
        None,
        &cfg,
        Some(&RefineConfig::default()),
    )
    .unwrap();
    let e = pose_errors(&est.pose, &truth);
    assert!(e.dr < 1e-8 && e.dt < 1e-7);
    assert_eq!(est.num_inliers(), data.len());
}

#[test]
fn fast_scoring_agrees_with_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let thr = 4.0 / 500.0;
    for problem in [
        Problem::GP3P,
        Problem::P6LLinear,
        Problem::LineAlign {
            scale_known: true,
            vertical: false,
        },
    ] {
        let (data, rig, truth) = scene_estimate(problem, 1.0, 4);
        let est = ProblemEstimator::new(problem, &data, &rig, None).unwrap();
        for _ in 0..10 {
            let pose = perturb(&truth, &mut rng, 0.002, 0.02, 0.0);
            let inl: Vec<f64> = (0..data.len())
                .map(|i| data_residual(&data, &rig, &pose, i))
                .filter(|&r| r <= thr)
                .collect();
            let (count, sum) = est.score(&pose, thr, 0).unwrap();
            assert_eq!(count, inl.len(), "{problem}");
            assert_eq!(sum, inl.iter().sum::<f64>(), "{problem}");
            assert!(est.score(&pose, thr, count).is_some());
            assert!(est.score(&pose, thr, count + 1).is_none());
        }
    }
}

#[test]
fn reselection_recovers_inliers_lost_by_a_coarse_start() {
    let (data, rig, truth) = scene_estimate(Problem::P6LLinear, 1.0, 9);
    let thr = 4.0 / 500.0;
    let coarse = perturb(&truth, &mut ChaCha8Rng::seed_from_u64(2), 0.004, 0.05, 0.0);
    let mask: Vec<bool> = (0..data.len())
        .map(|i| data_residual(&data, &rig, &coarse, i) <= thr)
        .collect();
    let seed = PoseEstimate {
        inlier_mask: mask,
        ..start(coarse, data.len(), thr)
    };
    let at_truth = (0..data.len())
        .filter(|&i| data_residual(&data, &rig, &truth, i) <= thr)
        .count();
    let once = refine_pose(&seed, &data, &rig, CostKind::Line, &RefineConfig::default()).unwrap();
    let est = refine_with_reselection(
        &seed,
        &data,
        &rig,
        CostKind::Line,
        17,
        &RefineConfig::default(),
    )
    .unwrap();
    assert!(seed.num_inliers() < at_truth);
    assert!(est.num_inliers() > once.num_inliers());
    assert!(
        est.num_inliers() + 5 >= at_truth,
        "{} of {at_truth}",
        est.num_inliers()
    );
    assert!(est.refinement.as_ref().unwrap().reselections >= 1);
    let e = pose_errors(&est.pose, &truth);
    assert!(e.dr.to_degrees() < 0.2 && e.dt < 0.05, "{e:?}");

    let none = RefineConfig {
        reselect_rounds: 0,
        ..Default::default()
    };
    let single = refine_with_reselection(&seed, &data, &rig, CostKind::Line, 17, &none).unwrap();
    assert_eq!(single.pose, once.pose);
}
