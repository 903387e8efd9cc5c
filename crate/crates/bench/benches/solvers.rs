use criterion::{criterion_group, criterion_main, Criterion};
use lineloc_bench::{minimal_set, solver_variants};
use lineloc_core::robust::ProblemEstimator;
use std::hint::black_box;

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimal_solver");
    for (label, problem, multi) in solver_variants() {
        let instances = minimal_set(problem, multi, 16, 1);
        let estimators: Vec<(ProblemEstimator, Vec<usize>)> = instances
            .iter()
            .map(|inst| {
                let est =
                    ProblemEstimator::new(problem, &inst.data, &inst.rig, inst.gravity.as_ref())
                        .expect("consistent instance");
                (est, (0..inst.data.len()).collect())
            })
            .collect();
        if label == "p6l-min" {
            group.sample_size(10);
        }
        let mut k = 0;
        group.bench_function(label, |b| {
            b.iter(|| {
                let (est, sample) = &estimators[k % estimators.len()];
                k += 1;
                black_box(est.solve(sample).map(|s| s.len()).unwrap_or(0))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, solvers);
criterion_main!(benches);
