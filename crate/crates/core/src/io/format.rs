//! Binary line-cloud files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "LC3D" | u32 version | u8 mode | u32 descriptor_dim | u64 count
//! count records:
//!   mode 0: 6 x f64 (direction, moment)       then descriptor_dim x f32
//!   mode 1: f32 u, f32 v, u8 direction index   then descriptor_dim x f32
//! optional trailer: "DGST" | 32 bytes input digest | 32 bytes lift digest
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{Unit, Vector3};

use super::{IoError, LineCloudMap, MapLines, MapMetadata};
use crate::geom::{CompactLine, PluckerLine};

pub const MAGIC: &[u8; 4] = b"LC3D";
pub const VERSION: u32 = 1;
const TRAILER: &[u8; 4] = b"DGST";

pub fn encode_map(map: &LineCloudMap) -> Result<Vec<u8>, IoError> {
    map.validate()?;
    let dim = map.metadata.descriptor_dim as usize;
    let record = match map.lines {
        MapLines::Full(_) => 48,
        MapLines::Compact(_) => 9,
    } + 4 * dim;
    let mut out = Vec::with_capacity(21 + record * map.len() + 68);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(map.lines.mode());
    out.extend_from_slice(&map.metadata.descriptor_dim.to_le_bytes());
    out.extend_from_slice(&(map.len() as u64).to_le_bytes());
    for i in 0..map.len() {
        match &map.lines {
            MapLines::Full(l) => {
                for c in l[i].direction.iter().chain(l[i].moment.iter()) {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            MapLines::Compact(l) => {
                out.extend_from_slice(&l[i].plane_u.to_le_bytes());
                out.extend_from_slice(&l[i].plane_v.to_le_bytes());
                out.push(l[i].direction_index);
            }
        }
        for c in map.descriptor(i) {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    if let (Some(a), Some(b)) = (&map.metadata.input_digest, &map.metadata.lift_digest) {
        let (a, b) = (digest_bytes(a)?, digest_bytes(b)?);
        out.extend_from_slice(TRAILER);
        out.extend_from_slice(&a);
        out.extend_from_slice(&b);
    }
    Ok(out)
}

fn digest_bytes(hex_digest: &str) -> Result<[u8; 32], IoError> {
    let v = hex::decode(hex_digest).map_err(|e| IoError::InvalidInput(format!("digest: {e}")))?;
    v.try_into()
        .map_err(|_| IoError::InvalidInput("digest must be 32 bytes".into()))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).ok_or(IoError::TruncatedFile)?;
        let s = self.data.get(self.pos..end).ok_or(IoError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }
}

pub fn decode_map(data: &[u8]) -> Result<LineCloudMap, IoError> {
    let mut c = Cursor { data, pos: 0 };
    let magic = c.take(4).map_err(|_| IoError::BadMagic)?;
    if magic != MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let mode = c.u8()?;
    let dim = c.u32()?;
    let count = c.u64()?;
    let record = match mode {
        0 => 48,
        1 => 9,
        m => return Err(IoError::UnsupportedMode(m)),
    } + 4 * dim as u64;
    // Reject impossible counts before allocating for them.
    if count
        .checked_mul(record)
        .is_none_or(|n| n > c.remaining() as u64)
    {
        return Err(IoError::TruncatedFile);
    }
    let n = count as usize;
    let mut full = Vec::new();
    let mut compact = Vec::new();
    let mut descriptors = Vec::with_capacity(if dim > 0 { n } else { 0 });
    for _ in 0..n {
        if mode == 0 {
            let mut v = [0.0; 6];
            for x in v.iter_mut() {
                *x = c.f64()?;
            }
            let d = Vector3::new(v[0], v[1], v[2]);
            if !v.iter().all(|x| x.is_finite()) || (d.norm() - 1.0).abs() > 1e-9 {
                return Err(IoError::InvalidInput(
                    "line record with a non-unit direction".into(),
                ));
            }
            full.push(PluckerLine {
                direction: Unit::new_unchecked(d),
                moment: Vector3::new(v[3], v[4], v[5]),
            });
        } else {
            let plane_u = c.f32()?;
            let plane_v = c.f32()?;
            let direction_index = c.u8()?;
            compact.push(CompactLine {
                direction_index,
                plane_u,
                plane_v,
            });
        }
        if dim > 0 {
            let mut d = Vec::with_capacity(dim as usize);
            for _ in 0..dim {
                d.push(c.f32()?);
            }
            descriptors.push(d);
        }
    }
    let (mut input_digest, mut lift_digest) = (None, None);
    if c.remaining() > 0 {
        if c.remaining() != 68 || c.take(4)? != TRAILER {
            return Err(IoError::TrailingBytes(c.remaining()));
        }
        input_digest = Some(hex::encode(c.take(32)?));
        lift_digest = Some(hex::encode(c.take(32)?));
    }
    let map = LineCloudMap {
        lines: if mode == 0 {
            MapLines::Full(full)
        } else {
            MapLines::Compact(compact)
        },
        descriptors,
        metadata: MapMetadata {
            version,
            descriptor_dim: dim,
            input_digest,
            lift_digest,
        },
    };
    map.validate()?;
    Ok(map)
}

pub fn write_map(map: &LineCloudMap, path: &Path) -> Result<(), IoError> {
    fs::write(path, encode_map(map)?)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<LineCloudMap, IoError> {
    decode_map(&fs::read(path)?)
}

/// Human-readable copy of a map, for debugging.
pub fn write_map_json(map: &LineCloudMap, path: &Path) -> Result<(), IoError> {
    map.validate()?;
    let mut s = serde_json::to_string_pretty(map)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_map_json(path: &Path) -> Result<LineCloudMap, IoError> {
    let map: LineCloudMap = serde_json::from_str(&fs::read_to_string(path)?)?;
    map.validate()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{covering_radius, decode_compact};
    use crate::io::{lift_map, LiftOptions, PointCloudInput};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(n: usize, dim: usize) -> PointCloudInput {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        PointCloudInput {
            points: (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect(),
            descriptors: (0..if dim > 0 { n } else { 0 })
                .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
                .collect(),
        }
    }

    #[test]
    fn full_mode_roundtrip_is_bit_identical() {
        let map = lift_map(&input(200, 8), 5, LiftOptions::default(), None).unwrap();
        let bytes = encode_map(&map).unwrap();
        let back = decode_map(&bytes).unwrap();
        assert_eq!(encode_map(&back).unwrap(), bytes);
        let (MapLines::Full(a), MapLines::Full(b)) = (&map.lines, &back.lines) else {
            panic!()
        };
        for (x, y) in a.iter().zip(b) {
            for (p, q) in x
                .direction
                .iter()
                .chain(x.moment.iter())
                .zip(y.direction.iter().chain(y.moment.iter()))
            {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
        assert_eq!(back, map);
    }

    #[test]
    fn header_layout() {
        let map = lift_map(&input(3, 2), 5, LiftOptions::default(), None).unwrap();
        let bytes = encode_map(&map).unwrap();
        assert_eq!(&bytes[..4], b"LC3D");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 21 + 3 * (48 + 8) + 68);
    }

    #[test]
    fn compact_roundtrip_is_within_covering_radius() {
        let opts = LiftOptions {
            compact: true,
            ..Default::default()
        };
        let inp = input(300, 0);
        let map = lift_map(&inp, 5, opts, None).unwrap();
        let full = lift_map(&inp, 5, LiftOptions::default(), None)
            .unwrap()
            .plucker_lines();
        let back = decode_map(&encode_map(&map).unwrap()).unwrap();
        assert_eq!(back, map);
        let MapLines::Compact(c) = &back.lines else {
            panic!()
        };
        for (cl, l) in c.iter().zip(&full) {
            let d = decode_compact(cl);
            assert!(d.direction.angle(&l.direction) <= covering_radius() + 1e-12);
        }
    }

    #[test]
    fn distinct_errors() {
        let map = lift_map(&input(4, 1), 5, LiftOptions::default(), None).unwrap();
        let bytes = encode_map(&map).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_map(&bad), Err(IoError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_map(&bad),
            Err(IoError::UnsupportedVersion(2))
        ));
        assert!(matches!(
            decode_map(&bytes[..40]),
            Err(IoError::TruncatedFile)
        ));
        assert!(matches!(
            decode_map(&bytes[..10]),
            Err(IoError::TruncatedFile)
        ));
        assert!(matches!(decode_map(b"LC"), Err(IoError::BadMagic)));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode_map(&bad), Err(IoError::TrailingBytes(_))));
        let mut bad = bytes.clone();
        bad[13..21].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_map(&bad), Err(IoError::TruncatedFile)));
    }

    #[test]
    fn json_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        let map = lift_map(&input(20, 3), 5, LiftOptions::default(), None).unwrap();
        write_map_json(&map, &path).unwrap();
        assert_eq!(read_map_json(&path).unwrap(), map);
    }

    #[test]
    fn files_hold_no_source_point() {
        let inp = input(500, 0);
        let bytes = encode_map(&lift_map(&inp, 9, LiftOptions::default(), None).unwrap()).unwrap();
        let words: Vec<f64> = (0..bytes.len() - 7)
            .map(|i| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()))
            .collect();
        for p in &inp.points {
            for i in 0..words.len().saturating_sub(16) {
                assert!(!(words[i] == p.x && words[i + 8] == p.y && words[i + 16] == p.z));
            }
        }
    }
}
