//! Descriptor matching between query observations and map entries.

use rayon::prelude::*;

use super::IoError;
use crate::geom::Observation2D;
use crate::solvers::Corr2D3D;

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum()
}

/// Index of the nearest entry and the nearest and second-nearest squared
/// distances. Ties go to the lower index.
fn nearest_two(q: &[f32], set: &[Vec<f32>]) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (usize::MAX, f64::INFINITY, f64::INFINITY);
    for (i, m) in set.iter().enumerate() {
        let d = sq_dist(q, m);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = i;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

fn check_dims(set: &[Vec<f32>], dim: usize) -> Result<(), IoError> {
    match set.iter().find(|d| d.len() != dim) {
        Some(d) => Err(IoError::DimensionMismatch {
            expected: dim,
            got: d.len(),
        }),
        None => Ok(()),
    }
}

/// Mutual nearest neighbours that pass the ratio test
/// `d_nearest < ratio * d_second` (Euclidean distances).
///
/// Returns `(query index, map index)` pairs sorted by query index. With a
/// single map entry the ratio test is vacuous.
pub fn match_descriptors(
    query: &[Vec<f32>],
    map: &[Vec<f32>],
    ratio: f64,
) -> Result<Vec<(usize, usize)>, IoError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(IoError::InvalidInput(format!(
            "ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let Some(dim) = map.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    check_dims(map, dim)?;
    check_dims(query, dim)?;
    let forward: Vec<(usize, f64, f64)> = query.par_iter().map(|q| nearest_two(q, map)).collect();
    let backward: Vec<usize> = map.par_iter().map(|m| nearest_two(m, query).0).collect();
    let r2 = ratio * ratio;
    Ok(forward
        .iter()
        .enumerate()
        .filter(|&(qi, &(mi, d1, d2))| mi != usize::MAX && backward[mi] == qi && d1 < r2 * d2)
        .map(|(qi, &(mi, _, _))| (qi, mi))
        .collect())
}

/// Matches query descriptors against map descriptors and pairs each accepted
/// observation with its map target.
pub fn match_correspondences<T: Clone>(
    observations: &[Observation2D],
    cameras: &[usize],
    query_descriptors: &[Vec<f32>],
    map_descriptors: &[Vec<f32>],
    targets: &[T],
    ratio: f64,
) -> Result<Vec<Corr2D3D<T>>, IoError> {
    if observations.len() != cameras.len() || observations.len() != query_descriptors.len() {
        return Err(IoError::InvalidInput(
            "observations, camera indices and descriptors differ in length".into(),
        ));
    }
    if map_descriptors.len() != targets.len() {
        return Err(IoError::InvalidInput(
            "map descriptors and targets differ in length".into(),
        ));
    }
    Ok(
        match_descriptors(query_descriptors, map_descriptors, ratio)?
            .into_iter()
            .map(|(q, m)| Corr2D3D::new(observations[q], cameras[q], targets[m].clone()))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
            .collect()
    }

    #[test]
    fn identical_sets_match_identically() {
        let d = random_set(200, 16, 1);
        let m = match_descriptors(&d, &d, 0.8).unwrap();
        assert_eq!(m, (0..200).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn equidistant_query_is_rejected() {
        let map = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 5.0]];
        let q = vec![vec![0.0, 0.0]];
        assert!(match_descriptors(&q, &map, 1.0).unwrap().is_empty());
        let q = vec![vec![0.5, 0.0]];
        assert_eq!(match_descriptors(&q, &map, 0.8).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn matches_are_mutual() {
        // Both queries are nearest to map entry 0; only the closer one keeps it.
        let map = vec![vec![0.0], vec![10.0]];
        let q = vec![vec![0.1], vec![0.2]];
        assert_eq!(match_descriptors(&q, &map, 0.9).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn dimension_and_ratio_checks() {
        let map = vec![vec![0.0, 1.0]];
        assert!(matches!(
            match_descriptors(&[vec![0.0]], &map, 0.8),
            Err(IoError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(match_descriptors(&[vec![0.0, 1.0]], &map, 0.0).is_err());
        assert!(match_descriptors(&[vec![0.0, 1.0]], &map, 1.5).is_err());
        assert!(match_descriptors(&[vec![0.0, 1.0]], &[], 0.8)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn swapped_labels_give_proportional_outliers() {
        let n = 1000;
        let map = random_set(n, 32, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Query i is a noisy copy of map entry label[i]; 10% of labels are swapped.
        let mut label: Vec<usize> = (0..n).collect();
        for k in (0..n / 10).step_by(2) {
            label.swap(k, k + 1);
        }
        let query: Vec<Vec<f32>> = label
            .iter()
            .map(|&l| {
                map[l]
                    .iter()
                    .map(|v| v + rng.random_range(-0.01f32..0.01))
                    .collect()
            })
            .collect();
        let m = match_descriptors(&query, &map, 0.8).unwrap();
        assert!(m.len() > 990);
        let wrong = m.iter().filter(|&&(q, mi)| mi != q).count();
        let frac = wrong as f64 / m.len() as f64;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
    }
}
