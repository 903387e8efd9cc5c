use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RobustError;

/// Hypotheses are generated and scored in blocks of this size. The block
/// size is fixed so that the accepted hypothesis sequence does not depend
/// on the number of worker threads.
const BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier threshold on the absolute residual, in the units of the problem.
    pub threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub min_iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 4.0 / 500.0,
            confidence: 0.99,
            max_iterations: 10_000,
            min_iterations: 1,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), RobustError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RobustError::InvalidConfig("confidence must lie in (0, 1)"));
        }
        if self.min_iterations < 1 || self.max_iterations < self.min_iterations {
            return Err(RobustError::InvalidConfig(
                "need 1 <= min_iterations <= max_iterations",
            ));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(RobustError::InvalidConfig("threshold must be positive"));
        }
        Ok(())
    }
}

/// A hypothesize-and-verify problem.
pub trait Estimator: Sync {
    type Model: Clone + Send + Sync;

    fn sample_size(&self) -> usize;
    fn num_data(&self) -> usize;
    /// All candidate models for a minimal sample; empty if the solver fails.
    fn hypotheses(&self, sample: &[usize]) -> Vec<Self::Model>;
    /// Absolute residual of datum `index`; `f64::INFINITY` when undefined.
    fn residual(&self, model: &Self::Model, index: usize) -> f64;

    /// Inlier count and inlier residual sum of `model`, or `None` as soon as
    /// fewer than `at_least` inliers are reachable. Implementations must agree
    /// with [`Estimator::residual`].
    fn score(&self, model: &Self::Model, threshold: f64, at_least: usize) -> Option<(usize, f64)> {
        count_inliers(
            self.num_data(),
            |i| self.residual(model, i),
            threshold,
            at_least,
        )
    }
}

/// Counts residuals within `threshold`, giving up once `at_least` is out of reach.
pub fn count_inliers(
    n: usize,
    residual: impl Fn(usize) -> f64,
    threshold: f64,
    at_least: usize,
) -> Option<(usize, f64)> {
    let mut inliers = 0;
    let mut sum = 0.0;
    for i in 0..n {
        let r = residual(i);
        if r <= threshold {
            inliers += 1;
            sum += r;
        } else if inliers + (n - i - 1) < at_least {
            return None;
        }
    }
    (inliers >= at_least).then_some((inliers, sum))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate<P> {
    pub pose: P,
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
    pub inlier_ratio: f64,
    /// Sum of squared residuals over the inliers.
    pub final_cost: f64,
    /// Threshold the inlier mask was computed with.
    pub threshold: f64,
    pub refinement: Option<super::RefineReport>,
}

impl<P> PoseEstimate<P> {
    pub fn num_inliers(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Iterations needed to draw an all-inlier sample of size `n` with
/// probability `p` when the inlier ratio is `w`.
pub fn adaptive_iterations(p: f64, w: f64, n: usize) -> f64 {
    let good = w.powi(n as i32);
    if good >= 1.0 {
        return 0.0;
    }
    if good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - p).ln() / (1.0 - good).ln()).ceil()
}

/// Indices of hypothesis `k`: a sample without replacement drawn from its own
/// ChaCha8 stream.
pub fn sample_indices(seed: u64, k: usize, n: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rand::seq::index::sample(&mut rng, n, m).into_vec()
}

#[derive(Clone)]
struct Scored<M> {
    model: M,
    inliers: usize,
    residual_sum: f64,
}

/// Seeded RANSAC. The best model maximizes the inlier count, then minimizes
/// the inlier residual sum; remaining ties go to the earlier hypothesis and
/// candidate. The result is identical for any thread count.
pub fn ransac<E: Estimator>(
    est: &E,
    config: &RansacConfig,
) -> Result<PoseEstimate<E::Model>, RobustError> {
    config.validate()?;
    let n = est.num_data();
    let m = est.sample_size();
    if n < m {
        return Err(RobustError::NotEnoughCorrespondences { needed: m, got: n });
    }

    let mut best: Option<Scored<E::Model>> = None;
    let mut needed = config.max_iterations;
    let mut processed = 0;
    'outer: while processed < needed {
        let start = processed;
        let end = (start + BLOCK).min(config.max_iterations);
        // Models that cannot tie the best one so far are dropped while scored.
        let at_least = best.as_ref().map_or(0, |b| b.inliers);
        let block: Vec<Vec<Scored<E::Model>>> = (start..end)
            .into_par_iter()
            .map(|k| {
                let sample = sample_indices(config.seed, k, n, m);
                est.hypotheses(&sample)
                    .into_iter()
                    .filter_map(|model| {
                        let (inliers, residual_sum) =
                            est.score(&model, config.threshold, at_least)?;
                        Some(Scored {
                            model,
                            inliers,
                            residual_sum,
                        })
                    })
                    .collect()
            })
            .collect();
        for candidates in block {
            for c in candidates {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        c.inliers > b.inliers
                            || (c.inliers == b.inliers && c.residual_sum < b.residual_sum)
                    }
                };
                if better {
                    best = Some(c);
                }
            }
            processed += 1;
            if let Some(b) = &best {
                let w = b.inliers as f64 / n as f64;
                let k = adaptive_iterations(config.confidence, w, m);
                needed = if k.is_finite() {
                    (k as usize).clamp(config.min_iterations, config.max_iterations)
                } else {
                    config.max_iterations
                };
            }
            if processed >= needed {
                break 'outer;
            }
        }
    }

    let best = match best {
        Some(b) if b.inliers >= m => b,
        _ => {
            return Err(RobustError::NoModelFound {
                iterations: processed,
            })
        }
    };
    let mut mask = vec![false; n];
    let mut cost = 0.0;
    for (i, slot) in mask.iter_mut().enumerate() {
        let r = est.residual(&best.model, i);
        if r <= config.threshold {
            *slot = true;
            cost += r * r;
        }
    }
    Ok(PoseEstimate {
        pose: best.model,
        inlier_ratio: best.inliers as f64 / n as f64,
        inlier_mask: mask,
        iterations_run: processed,
        final_cost: cost,
        threshold: config.threshold,
        refinement: None,
    })
}
