//! Quantized line encoding: one byte of direction plus two floats of position.
//!
//! The codebook is the 256-point Fibonacci sphere
//! `z_i = 1 - (2i + 1) / 256`, `phi_i = i * pi * (3 - sqrt 5)`.
//! The plane basis of entry `u` is `e1 = normalize(u x a)`, `e2 = u x e1`,
//! where `a` is the coordinate axis least aligned with `u` (lowest index on
//! ties).

use std::sync::OnceLock;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{PluckerLine, UnitVec3, Vec3};

pub const CODEBOOK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactLine {
    pub direction_index: u8,
    pub plane_u: f32,
    pub plane_v: f32,
}

struct Codebook {
    dirs: Vec<UnitVec3>,
    bases: Vec<(Vec3, Vec3)>,
}

fn build() -> Codebook {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let n = CODEBOOK_SIZE as f64;
    let dirs: Vec<UnitVec3> = (0..CODEBOOK_SIZE)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * golden;
            Unit::new_normalize(Vector3::new(r * phi.cos(), r * phi.sin(), z))
        })
        .collect();
    let bases = dirs
        .iter()
        .map(|u| {
            let axis = u.iamin();
            let mut a = Vector3::zeros();
            a[axis] = 1.0;
            let e1 = u.cross(&a).normalize();
            let e2 = u.cross(&e1);
            (e1, e2)
        })
        .collect();
    Codebook { dirs, bases }
}

fn book() -> &'static Codebook {
    static BOOK: OnceLock<Codebook> = OnceLock::new();
    BOOK.get_or_init(build)
}

pub fn codebook() -> &'static [UnitVec3] {
    &book().dirs
}

pub fn codebook_basis(index: u8) -> (Vec3, Vec3) {
    book().bases[index as usize]
}

/// Index of the codebook direction with maximal dot product (lowest index on ties).
fn nearest(v: &Vec3) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, c) in codebook().iter().enumerate() {
        let d = c.dot(v);
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}

pub fn encode_compact(line: &PluckerLine) -> CompactLine {
    let v = line.direction.into_inner();
    let idx = nearest(&v);
    let c = codebook()[idx].into_inner();
    let x0 = line.closest_point_to_origin();
    // The nearest codebook direction is within the covering radius of v, so c·v > 0.
    let alpha = -c.dot(&x0) / c.dot(&v);
    let p = x0 + v * alpha;
    let (e1, e2) = book().bases[idx];
    CompactLine {
        direction_index: idx as u8,
        plane_u: p.dot(&e1) as f32,
        plane_v: p.dot(&e2) as f32,
    }
}

pub fn decode_compact(c: &CompactLine) -> PluckerLine {
    let dir = codebook()[c.direction_index as usize];
    let p = compact_plane_point(c);
    PluckerLine::through_point(&p, &dir)
}

/// The stored plane point in 3D.
pub fn compact_plane_point(c: &CompactLine) -> Vec3 {
    let (e1, e2) = book().bases[c.direction_index as usize];
    e1 * c.plane_u as f64 + e2 * c.plane_v as f64
}

/// Largest angle (radians) between any unit direction and its nearest codebook entry.
///
/// Computed from the circumcenters of all empty-circumcircle triples of
/// neighboring codebook points, which are exactly the vertices of the
/// spherical Voronoi diagram.
pub fn covering_radius() -> f64 {
    static RADIUS: OnceLock<f64> = OnceLock::new();
    *RADIUS.get_or_init(compute_covering_radius)
}

fn compute_covering_radius() -> f64 {
    let dirs: Vec<Vec3> = codebook().iter().map(|u| u.into_inner()).collect();
    let n = dirs.len();
    // Voronoi vertices of this codebook are well below 30° from their
    // generators; neighbor triples within 60° therefore include every
    // Delaunay triangle.
    let near = (60f64).to_radians().cos();
    let mut best_cos = 1.0f64;
    for i in 0..n {
        let nb: Vec<usize> = (i + 1..n)
            .filter(|&j| dirs[i].dot(&dirs[j]) > near)
            .collect();
        for (a, &j) in nb.iter().enumerate() {
            for &k in &nb[a + 1..] {
                if dirs[j].dot(&dirs[k]) <= near {
                    continue;
                }
                let normal = (dirs[j] - dirs[i]).cross(&(dirs[k] - dirs[i]));
                let len = normal.norm();
                if len < 1e-14 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let m = normal * (sign / len);
                    let cos_r = m.dot(&dirs[i]);
                    if cos_r <= 0.0 {
                        continue;
                    }
                    let empty = dirs.iter().all(|d| d.dot(&m) <= cos_r + 1e-12);
                    if empty && cos_r < best_cos {
                        best_cos = cos_r;
                    }
                }
            }
        }
    }
    best_cos.clamp(-1.0, 1.0).acos()
}
