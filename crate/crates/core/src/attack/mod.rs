//! Attacks on line clouds: intersecting independent liftings and looking
//! for concentrations of near-intersections in a single cloud.

use std::collections::HashMap;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{PluckerLine, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("the two lines are identical")]
    IdenticalLines,
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("correspondence {index} refers to line {line} of a cloud with {len} lines")]
    CorrespondenceOutOfRange {
        index: usize,
        line: usize,
        len: usize,
    },
}

/// Directions with `|v1 × v2|` below this are treated as parallel.
const PARALLEL_EPS: f64 = 1e-12;

/// Midpoint of the common perpendicular of two lines and its length.
///
/// Parallel lines give their offset, with the midpoint between the points
/// closest to the origin.
pub fn closest_approach(a: &PluckerLine, b: &PluckerLine) -> Result<(Vec3, f64), AttackError> {
    let (v1, v2) = (a.direction.into_inner(), b.direction.into_inner());
    let (p1, p2) = (a.closest_point_to_origin(), b.closest_point_to_origin());
    let n = v1.cross(&v2);
    let nn = n.norm();
    let scale = 1.0 + p1.norm().max(p2.norm());
    if nn <= PARALLEL_EPS {
        let dist = (p2 - p1).norm();
        if dist <= PARALLEL_EPS * scale {
            return Err(AttackError::IdenticalLines);
        }
        return Ok(((p1 + p2) * 0.5, dist));
    }
    let d = p2 - p1;
    let n2 = nn * nn;
    let s = d.cross(&v2).dot(&n) / n2;
    let t = d.cross(&v1).dot(&n) / n2;
    let mid = (p1 + v1 * s + p2 + v2 * t) * 0.5;
    Ok((mid, a.reciprocal_product(b).abs() / nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Largest closest-approach distance of a candidate intersection.
    pub pair_radius: f64,
    /// Single-linkage radius for grouping candidate intersections.
    pub cluster_radius: f64,
    pub min_cluster_size: usize,
    /// Region searched for intersections, as (min, max) corners. `None`
    /// takes the bounding box of the points of each line closest to the
    /// centroid of the cloud.
    pub bounds: Option<(Vec3, Vec3)>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            pair_radius: 0.01,
            cluster_radius: 0.01,
            min_cluster_size: 2,
            bounds: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.pair_radius > 0.0 && self.pair_radius.is_finite()) {
            return Err(AttackError::InvalidConfig("pair_radius must be positive"));
        }
        if !(self.cluster_radius > 0.0 && self.cluster_radius.is_finite()) {
            return Err(AttackError::InvalidConfig(
                "cluster_radius must be positive",
            ));
        }
        if self.min_cluster_size < 2 {
            return Err(AttackError::InvalidConfig(
                "min_cluster_size must be at least 2",
            ));
        }
        if let Some((lo, hi)) = self.bounds {
            if (0..3).any(|k| !(lo[k] < hi[k])) {
                return Err(AttackError::InvalidConfig("bounds must have min < max"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPoint {
    pub position: Vec3,
    /// Cluster mass for the density attack, 1 for intersections.
    pub confidence: f64,
    /// Closest-approach distance of an intersection, or the RMS distance of
    /// a cluster's members to its centroid.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackReport {
    pub points: Vec<RecoveredPoint>,
    /// Set by [`AttackReport::score`].
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tau: Option<f64>,
    /// Pairs skipped because both clouds hold the same line.
    pub identical_pairs: usize,
    /// Pairs skipped because the two liftings chose parallel directions.
    pub parallel_pairs: usize,
    /// Candidate intersections found by the density attack.
    pub candidate_pairs: usize,
}

impl AttackReport {
    /// Scores the recovered points against the truth at radius `tau`.
    pub fn score(&mut self, truth: &[Vec3], tau: f64) {
        let positions: Vec<Vec3> = self.points.iter().map(|p| p.position).collect();
        let (p, r) = score_attack(&positions, truth, tau);
        self.precision = Some(p);
        self.recall = Some(r);
        self.tau = Some(tau);
    }
}

/// Intersects corresponding lines of two liftings of the same points.
///
/// Pairs of identical or parallel lines cannot be intersected and are only
/// counted. The points keep the order of `pairs`.
pub fn multi_lift_attack(
    a: &[PluckerLine],
    b: &[PluckerLine],
    pairs: &[(usize, usize)],
) -> Result<AttackReport, AttackError> {
    let mut report = AttackReport::default();
    for (index, &(i, j)) in pairs.iter().enumerate() {
        if i >= a.len() {
            return Err(AttackError::CorrespondenceOutOfRange {
                index,
                line: i,
                len: a.len(),
            });
        }
        if j >= b.len() {
            return Err(AttackError::CorrespondenceOutOfRange {
                index,
                line: j,
                len: b.len(),
            });
        }
        let (la, lb) = (&a[i], &b[j]);
        if la.direction.cross(&lb.direction).norm() <= PARALLEL_EPS {
            match closest_approach(la, lb) {
                Err(AttackError::IdenticalLines) => report.identical_pairs += 1,
                _ => report.parallel_pairs += 1,
            }
            continue;
        }
        let (position, spread) = closest_approach(la, lb)?;
        report.points.push(RecoveredPoint {
            position,
            confidence: 1.0,
            spread,
        });
    }
    Ok(report)
}

type Cell = (i64, i64, i64);

fn cell_of(p: &Vec3, origin: &Vec3, h: f64) -> Cell {
    let q = (p - origin) / h;
    (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64)
}

/// Parameter interval of `line` inside the box, if any.
fn clip(line: &PluckerLine, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let p = line.closest_point_to_origin();
    let v = line.direction.into_inner();
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if v[k].abs() < 1e-300 {
            if p[k] < lo[k] || p[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - p[k]) / v[k];
        let b = (hi[k] - p[k]) / v[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Cells of side `h` crossed by `line` between parameters `t0` and `t1`,
/// with the parameter interval spent in each.
fn traverse(line: &PluckerLine, t0: f64, t1: f64, origin: &Vec3, h: f64) -> Vec<(Cell, f64, f64)> {
    let v = line.direction.into_inner();
    let start = line.point_at(t0);
    let mut cell = cell_of(&start, origin, h);
    let mut cur = [cell.0, cell.1, cell.2];
    let mut step = [0i64; 3];
    let mut next = [f64::INFINITY; 3];
    let mut delta = [f64::INFINITY; 3];
    for k in 0..3 {
        if v[k] > 0.0 {
            step[k] = 1;
            let boundary = origin[k] + (cur[k] + 1) as f64 * h;
            next[k] = t0 + (boundary - start[k]) / v[k];
            delta[k] = h / v[k];
        } else if v[k] < 0.0 {
            step[k] = -1;
            let boundary = origin[k] + cur[k] as f64 * h;
            next[k] = t0 + (boundary - start[k]) / v[k];
            delta[k] = -h / v[k];
        }
    }
    let mut out = Vec::new();
    let mut enter = t0;
    let limit = 3 + ((t1 - t0) / h).ceil() as usize * 3;
    loop {
        let k = (0..3).min_by(|&a, &b| next[a].total_cmp(&next[b])).unwrap();
        let exit = next[k].min(t1);
        out.push((cell, enter, exit));
        if next[k] >= t1 || out.len() >= limit {
            break;
        }
        enter = next[k];
        cur[k] += step[k];
        next[k] += delta[k];
        cell = (cur[0], cur[1], cur[2]);
    }
    out
}

/// Cells within `margin` of the part of `line` crossing `cell`
/// (conservatively, from the bounding box of that segment).
fn dilate(
    line: &PluckerLine,
    (cell, enter, exit): (Cell, f64, f64),
    origin: &Vec3,
    h: f64,
    margin: f64,
    out: &mut Vec<Cell>,
) {
    let (a, b) = (line.point_at(enter), line.point_at(exit));
    let c = [cell.0, cell.1, cell.2];
    let mut range = [(0i64, 0i64); 3];
    for k in 0..3 {
        let lo = origin[k] + c[k] as f64 * h;
        let hi = lo + h;
        let (smin, smax) = (a[k].min(b[k]), a[k].max(b[k]));
        range[k] = (
            if smin - margin < lo { -1 } else { 0 },
            if smax + margin > hi { 1 } else { 0 },
        );
    }
    for dx in range[0].0..=range[0].1 {
        for dy in range[1].0..=range[1].1 {
            for dz in range[2].0..=range[2].1 {
                out.push((c[0] + dx, c[1] + dy, c[2] + dz));
            }
        }
    }
}

fn neighbours(c: Cell) -> impl Iterator<Item = Cell> {
    (-1..=1).flat_map(move |dx| {
        (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| (c.0 + dx, c.1 + dy, c.2 + dz)))
    })
}

fn default_bounds(lines: &[PluckerLine]) -> (Vec3, Vec3) {
    let n = lines.len() as f64;
    let centroid = lines
        .iter()
        .map(|l| l.closest_point_to_origin())
        .sum::<Vec3>()
        / n;
    lines.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), l| {
            let p = l.point_at(l.parameter_of(&centroid));
            (lo.inf(&p), hi.sup(&p))
        },
    )
}

/// Candidate intersections `(i, j, midpoint, distance)` with `i < j`,
/// distance below `radius` and midpoint inside the box, ordered by pair.
fn candidate_pairs(
    lines: &[PluckerLine],
    radius: f64,
    lo: &Vec3,
    hi: &Vec3,
) -> Vec<(usize, usize, Vec3, f64)> {
    // Cells no smaller than the pair radius, and not so small that long
    // lines cross an excessive number of them.
    let extent = (hi - lo).amax();
    let h = radius.max(extent / 64.0);
    let margin = Vec3::repeat(h);
    let (glo, ghi) = (lo - margin, hi + margin);
    // Each line is registered in every cell its tube of radius r/2 meets,
    // so two lines within r of each other share the cell of the midpoint.
    let cells: Vec<Vec<Cell>> = lines
        .par_iter()
        .map(|l| {
            let Some((t0, t1)) = clip(l, &glo, &ghi) else {
                return Vec::new();
            };
            let mut out: Vec<Cell> = Vec::new();
            for seg in traverse(l, t0, t1, &glo, h) {
                dilate(l, seg, &glo, h, radius * 0.5, &mut out);
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let mut entries: Vec<(Cell, u32)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, cs)| cs.iter().map(move |c| (*c, i as u32)))
        .collect();
    entries.par_sort_unstable();
    let mut keys: Vec<u64> = Vec::new();
    for group in entries.chunk_by(|a, b| a.0 == b.0) {
        for (x, a) in group.iter().enumerate() {
            for b in &group[x + 1..] {
                keys.push(((a.1 as u64) << 32) | b.1 as u64);
            }
        }
    }
    keys.par_sort_unstable();
    keys.dedup();
    let inside = |p: &Vec3| (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k]);
    keys.par_iter()
        .filter_map(|&key| {
            let (i, j) = ((key >> 32) as usize, (key & 0xffff_ffff) as usize);
            let (m, d) = closest_approach(&lines[i], &lines[j]).ok()?;
            (d < radius && inside(&m)).then_some((i, j, m, d))
        })
        .collect()
}

/// Single-linkage clusters of `points` at `radius`, as lists of indices in
/// increasing order, ordered by their smallest index.
fn single_linkage(points: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let origin = points
        .iter()
        .fold(Vec3::repeat(f64::INFINITY), |lo, p| lo.inf(p));
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p, &origin, radius)).or_default().push(i);
    }
    let r2 = radius * radius;
    let mut uf = UnionFind::<usize>::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for nb in neighbours(cell_of(p, &origin, radius)) {
            if let Some(js) = grid.get(&nb) {
                for &j in js.iter().filter(|&&j| j > i) {
                    if (points[j] - p).norm_squared() <= r2 {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..points.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Recovers points where many lines of a single cloud nearly meet.
///
/// Recovered points are cluster centroids ordered by decreasing mass, then
/// by the first candidate they contain.
pub fn density_attack(
    lines: &[PluckerLine],
    config: &AttackConfig,
) -> Result<AttackReport, AttackError> {
    config.validate()?;
    let mut report = AttackReport::default();
    if lines.len() < 2 {
        return Ok(report);
    }
    let (lo, hi) = config.bounds.unwrap_or_else(|| default_bounds(lines));
    let pairs = candidate_pairs(lines, config.pair_radius, &lo, &hi);
    report.candidate_pairs = pairs.len();
    let mids: Vec<Vec3> = pairs.iter().map(|p| p.2).collect();
    let mut clusters: Vec<(usize, RecoveredPoint)> = single_linkage(&mids, config.cluster_radius)
        .into_iter()
        .filter(|g| g.len() >= config.min_cluster_size)
        .map(|g| {
            let n = g.len() as f64;
            let c = g.iter().map(|&i| mids[i]).sum::<Vec3>() / n;
            let spread = (g.iter().map(|&i| (mids[i] - c).norm_squared()).sum::<f64>() / n).sqrt();
            (
                g[0],
                RecoveredPoint {
                    position: c,
                    confidence: n,
                    spread,
                },
            )
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.1.confidence
            .total_cmp(&a.1.confidence)
            .then(a.0.cmp(&b.0))
    });
    report.points = clusters.into_iter().map(|(_, p)| p).collect();
    Ok(report)
}

/// Greedy one-to-one matching within `tau`, in the order of `recovered`
/// (callers sort by confidence). Returns (precision, recall); both are 0
/// for empty inputs.
pub fn score_attack(recovered: &[Vec3], truth: &[Vec3], tau: f64) -> (f64, f64) {
    if recovered.is_empty() || truth.is_empty() || !(tau > 0.0) {
        return (0.0, 0.0);
    }
    let origin = truth
        .iter()
        .fold(Vec3::repeat(f64::INFINITY), |lo, p| lo.inf(p));
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in truth.iter().enumerate() {
        grid.entry(cell_of(p, &origin, tau)).or_default().push(i);
    }
    let mut used = vec![false; truth.len()];
    let mut matched = 0usize;
    for r in recovered {
        let mut best: Option<(f64, usize)> = None;
        for nb in neighbours(cell_of(r, &origin, tau)) {
            for &j in grid.get(&nb).into_iter().flatten() {
                let d = (truth[j] - r).norm();
                if !used[j] && d <= tau && best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj))
                {
                    best = Some((d, j));
                }
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            matched += 1;
        }
    }
    (
        matched as f64 / recovered.len() as f64,
        matched as f64 / truth.len() as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{lift_point, random_unit_vector};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(p: [f64; 3], d: [f64; 3]) -> PluckerLine {
        PluckerLine::through_point(
            &Vector3::from(p),
            &nalgebra::Unit::new_normalize(Vector3::from(d)),
        )
    }

    /// Direct minimization of |a(s) - b(t)| over a shrinking grid.
    fn brute_force(a: &PluckerLine, b: &PluckerLine) -> (Vec3, f64) {
        let (mut cs, mut ct, mut span) = (0.0, 0.0, 10.0);
        for _ in 0..60 {
            let mut best = (f64::INFINITY, cs, ct);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (s, t) = (cs + span * i as f64 / 10.0, ct + span * j as f64 / 10.0);
                    let d = (a.point_at(s) - b.point_at(t)).norm();
                    if d < best.0 {
                        best = (d, s, t);
                    }
                }
            }
            (cs, ct) = (best.1, best.2);
            span *= 0.5;
        }
        (
            (a.point_at(cs) + b.point_at(ct)) * 0.5,
            (a.point_at(cs) - b.point_at(ct)).norm(),
        )
    }

    #[test]
    fn crossing_lines_meet_at_their_intersection() {
        let (m, d) = closest_approach(
            &line([1.0, 1.0, 1.0], [1.0, 0.0, 0.0]),
            &line([1.0, 1.0, 1.0], [0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert!((m - Vector3::new(1.0, 1.0, 1.0)).norm() < 1e-12);
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn skew_pair_matches_direct_minimization() {
        let a = line([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let b = line([0.0, 1.0, 1.0], [0.0, 0.0, 1.0]);
        let (bm, bd) = brute_force(&a, &b);
        assert!((bm - Vector3::new(0.0, 0.5, 0.0)).norm() < 1e-6);
        assert!((bd - 1.0).abs() < 1e-9);
        let (m, d) = closest_approach(&a, &b).unwrap();
        assert!((m - Vector3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_pairs_match_direct_minimization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = |rng: &mut ChaCha8Rng| {
                Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            };
            let a = PluckerLine::through_point(&p(&mut rng), &random_unit_vector(&mut rng));
            let b = PluckerLine::through_point(&p(&mut rng), &random_unit_vector(&mut rng));
            let (bm, bd) = brute_force(&a, &b);
            let (m, d) = closest_approach(&a, &b).unwrap();
            assert!((m - bm).norm() < 1e-6 && (d - bd).abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_and_identical_lines() {
        let a = line([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let b = line([2.0, 0.0, 5.0], [0.0, 0.0, -1.0]);
        let (m, d) = closest_approach(&a, &b).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!((m - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(
            closest_approach(&a, &line([0.0, 0.0, 3.0], [0.0, 0.0, 1.0])),
            Err(AttackError::IdenticalLines)
        );
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                )
            })
            .collect()
    }

    #[test]
    fn independent_liftings_reveal_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 1000, 5.0);
        let mut ra = ChaCha8Rng::seed_from_u64(10);
        let mut rb = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<_> = pts.iter().map(|p| lift_point(p, &mut ra)).collect();
        let b: Vec<_> = pts.iter().map(|p| lift_point(p, &mut rb)).collect();
        let pairs: Vec<_> = (0..pts.len()).map(|i| (i, i)).collect();
        let mut rep = multi_lift_attack(&a, &b, &pairs).unwrap();
        assert!(rep
            .points
            .iter()
            .zip(&pts)
            .all(|(r, p)| (r.position - p).norm() < 1e-9));
        rep.score(&pts, 1e-6);
        assert_eq!(rep.recall, Some(1.0));
    }

    #[test]
    fn identical_liftings_reveal_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 100, 5.0);
        let lift = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            pts.iter()
                .map(|p| lift_point(p, &mut r))
                .collect::<Vec<_>>()
        };
        let (a, b) = (lift(7), lift(7));
        let pairs: Vec<_> = (0..pts.len()).map(|i| (i, i)).collect();
        let rep = multi_lift_attack(&a, &b, &pairs).unwrap();
        assert!(rep.points.is_empty());
        assert_eq!(rep.identical_pairs, 100);
    }

    #[test]
    fn corrupted_correspondence_is_flagged_by_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 20, 5.0);
        let a: Vec<_> = pts.iter().map(|p| lift_point(p, &mut rng)).collect();
        let b: Vec<_> = pts.iter().map(|p| lift_point(p, &mut rng)).collect();
        let mut pairs: Vec<_> = (0..pts.len()).map(|i| (i, i)).collect();
        pairs[3] = (3, 9);
        let rep = multi_lift_attack(&a, &b, &pairs).unwrap();
        assert!(rep.points[3].spread > 1e-3);
        assert!(pts
            .iter()
            .all(|p| (rep.points[3].position - p).norm() > 1e-6));
        assert!(rep
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 3)
            .all(|(_, r)| r.spread < 1e-9));
    }

    #[test]
    fn out_of_range_correspondence_is_rejected() {
        let a = vec![line([0.0; 3], [1.0, 0.0, 0.0])];
        assert!(multi_lift_attack(&a, &a, &[(0, 1)]).is_err());
    }

    #[test]
    fn bundle_through_one_point_gives_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Vector3::new(1.0, -2.0, 0.5);
        let lines: Vec<_> = (0..50).map(|_| lift_point(&x, &mut rng)).collect();
        let rep = density_attack(&lines, &AttackConfig::default()).unwrap();
        assert_eq!(rep.points.len(), 1);
        assert!((rep.points[0].position - x).norm() < 1e-9);
        assert_eq!(rep.points[0].confidence, (50 * 49 / 2) as f64);
    }

    #[test]
    fn tiny_clouds_give_empty_reports() {
        let cfg = AttackConfig::default();
        assert!(density_attack(&[], &cfg).unwrap().points.is_empty());
        assert!(density_attack(&[line([0.0; 3], [1.0, 0.0, 0.0])], &cfg)
            .unwrap()
            .points
            .is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = AttackConfig {
            min_cluster_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AttackConfig {
            pair_radius: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scoring_examples() {
        let t = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        assert_eq!(score_attack(&t, &t, 0.1), (1.0, 1.0));
        assert_eq!(score_attack(&[], &t, 0.1), (0.0, 0.0));
        assert_eq!(score_attack(&t[..1], &t, 0.1), (1.0, 0.5));
        // Two recoveries near one truth point match it once.
        let near = vec![Vector3::new(0.01, 0.0, 0.0), Vector3::new(-0.01, 0.0, 0.0)];
        assert_eq!(score_attack(&near, &t, 0.1), (0.5, 0.5));
    }

    #[test]
    fn pair_search_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = random_points(&mut rng, 150, 1.0);
        let lines: Vec<_> = pts.iter().map(|p| lift_point(p, &mut rng)).collect();
        let (lo, hi) = (Vector3::repeat(-1.0), Vector3::repeat(1.0));
        let fast = candidate_pairs(&lines, 0.05, &lo, &hi);
        let mut slow = Vec::new();
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (m, d) = closest_approach(&lines[i], &lines[j]).unwrap();
                if d < 0.05 && (0..3).all(|k| m[k] >= lo[k] && m[k] <= hi[k]) {
                    slow.push((i, j));
                }
            }
        }
        assert!(!slow.is_empty());
        assert_eq!(fast.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), slow);
    }
}
