use criterion::{criterion_group, criterion_main, Criterion};
use lineloc_bench::{descriptors, uniform_points};
use lineloc_core::io::{
    decode_map, encode_map, lift_map, match_descriptors, LiftOptions, PointCloudInput,
};
use std::hint::black_box;

fn formats(c: &mut Criterion) {
    let input = PointCloudInput {
        points: uniform_points(2000, 5.0, 1),
        descriptors: descriptors(2000, 32, 2),
    };
    for compact in [false, true] {
        let name = if compact { "compact" } else { "full" };
        let options = LiftOptions {
            compact,
            allow_relift: false,
        };
        c.bench_function(&format!("lift_{name}_2000"), |b| {
            b.iter(|| black_box(lift_map(&input, 7, options, None).map(|m| m.len())))
        });
        let map = lift_map(&input, 7, options, None).expect("valid input");
        let bytes = encode_map(&map).expect("valid map");
        c.bench_function(&format!("encode_{name}_2000"), |b| {
            b.iter(|| black_box(encode_map(&map).map(|v| v.len())))
        });
        c.bench_function(&format!("decode_{name}_2000"), |b| {
            b.iter(|| black_box(decode_map(&bytes).map(|m| m.len())))
        });
    }

    let map_desc = descriptors(2000, 32, 3);
    let query_desc: Vec<Vec<f32>> = map_desc.iter().step_by(2).cloned().collect();
    let mut group = c.benchmark_group("matching");
    group.sample_size(10);
    group.bench_function("mutual_nn_1000x2000", |b| {
        b.iter(|| black_box(match_descriptors(&query_desc, &map_desc, 0.8).map(|m| m.len())))
    });
    group.finish();
}

criterion_group!(benches, formats);
criterion_main!(benches);
