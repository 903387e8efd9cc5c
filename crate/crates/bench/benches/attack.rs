use criterion::{criterion_group, criterion_main, Criterion};
use lineloc_bench::{lift_all, uniform_points};
use lineloc_core::attack::{density_attack, multi_lift_attack, AttackConfig};
use std::hint::black_box;

fn attacks(c: &mut Criterion) {
    let points = uniform_points(2000, 5.0, 8);
    let a = lift_all(&points, 81);
    let b = lift_all(&points, 82);
    let pairs: Vec<(usize, usize)> = (0..points.len()).map(|i| (i, i)).collect();
    c.bench_function("multi_lift_2000", |bench| {
        bench.iter(|| black_box(multi_lift_attack(&a, &b, &pairs).map(|r| r.points.len())))
    });

    let mut group = c.benchmark_group("density");
    group.sample_size(10);
    let config = AttackConfig {
        pair_radius: 0.002,
        cluster_radius: 0.005,
        min_cluster_size: 2,
        bounds: None,
    };
    group.bench_function("uniform_2000", |bench| {
        bench.iter(|| black_box(density_attack(&a, &config).map(|r| r.points.len())))
    });
    group.finish();
}

criterion_group!(benches, attacks);
criterion_main!(benches);
