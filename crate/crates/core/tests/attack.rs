use lineloc_core::attack::{density_attack, AttackConfig};
use lineloc_core::{lift_point, PluckerLine, Vec3};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, side: f64) -> Vec<Vec3> {
    let g = side / (n - 1) as f64;
    (0..n * n * n)
        .map(|i| Vector3::new((i % n) as f64, ((i / n) % n) as f64, (i / (n * n)) as f64) * g)
        .collect()
}

fn lift(points: &[Vec3], seed: u64) -> Vec<PluckerLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.iter().map(|p| lift_point(p, &mut rng)).collect()
}

fn config() -> AttackConfig {
    AttackConfig {
        pair_radius: 0.002,
        cluster_radius: 0.005,
        min_cluster_size: 2,
        bounds: None,
    }
}

fn recall(lines: &[PluckerLine], truth: &[Vec3]) -> f64 {
    let mut rep = density_attack(lines, &config()).unwrap();
    rep.score(truth, 0.05);
    rep.recall.unwrap()
}

#[test]
fn recall_grows_with_density() {
    let mut last = -1.0;
    for n in [8, 12, 16] {
        let pts = grid(n, 0.95);
        let r = recall(&lift(&pts, 9), &pts);
        assert!(r >= last, "n = {n}: recall {r} after {last}");
        last = r;
    }
    assert!(last > 0.1);
}

#[test]
fn dropping_lines_lowers_recall() {
    let pts = grid(16, 0.95);
    let lines = lift(&pts, 9);
    let mut last = f64::INFINITY;
    for keep in [1.0, 0.5, 0.25] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = (keep * lines.len() as f64).round() as usize;
        let mut idx = rand::seq::index::sample(&mut rng, lines.len(), k).into_vec();
        idx.sort_unstable();
        let sub: Vec<_> = idx.iter().map(|&i| lines[i]).collect();
        let r = recall(&sub, &pts);
        assert!(r < last, "keep {keep}: recall {r} after {last}");
        last = r;
    }
}

#[test]
fn single_line_reveals_nothing() {
    let lines = lift(&[Vector3::new(1.0, 2.0, 3.0)], 1);
    assert!(density_attack(&lines, &config()).unwrap().points.is_empty());
}

#[test]
fn sparse_cloud_resists_the_density_attack() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vec3> = (0..2000)
        .map(|_| {
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            )
        })
        .collect();
    let sparse = recall(&lift(&pts, 2), &pts);
    let dense_pts = grid(13, 0.95);
    let dense = recall(&lift(&dense_pts, 2), &dense_pts);
    assert!(sparse < 0.01, "sparse recall {sparse}");
    assert!(dense > sparse);
}

#[test]
fn density_attack_is_deterministic() {
    let pts = grid(10, 0.95);
    let lines = lift(&pts, 4);
    assert_eq!(
        density_attack(&lines, &config()).unwrap(),
        density_attack(&lines, &config()).unwrap()
    );
}
