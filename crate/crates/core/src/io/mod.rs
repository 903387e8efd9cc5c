//! Line-cloud containers, file formats, text inputs and descriptor matching.
//!
//! A [`LineCloudMap`] holds lines and descriptors only. The source points
//! are represented by digests: one of the input alone, to recognize a
//! re-lifting of the same point set, and one of the seed together with the
//! input, to recognize the same lifting. The seed itself is never stored.

mod format;
mod matching;
mod text;

pub use format::{
    decode_map, encode_map, read_map, read_map_json, write_map, write_map_json, MAGIC, VERSION,
};
pub use matching::{match_correspondences, match_descriptors};
pub use text::{
    parse_gravity, read_observations, read_point_csv, read_rig, write_observations,
    write_point_csv, write_rig, CameraJson, ObservationInput, RigJson,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{decode_compact, encode_compact, lift_point, CompactLine, PluckerLine, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("not a line-cloud file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported line mode {0}")]
    UnsupportedMode(u8),
    #[error("file ends before the declared content")]
    TruncatedFile,
    #[error("{0} unexpected bytes after the declared content")]
    TrailingBytes(usize),
    #[error("this point set was already lifted with another seed; re-lifting reveals the points")]
    RepeatedLiftingRefused,
    #[error("descriptor dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// 3D points with optional per-point descriptors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloudInput {
    pub points: Vec<Vec3>,
    /// Empty, or one descriptor of a common dimension per point.
    pub descriptors: Vec<Vec<f32>>,
}

impl PointCloudInput {
    pub fn descriptor_dim(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(IoError::InvalidInput("non-finite point coordinate".into()));
        }
        if !self.descriptors.is_empty() {
            if self.descriptors.len() != self.points.len() {
                return Err(IoError::InvalidInput(format!(
                    "{} descriptors for {} points",
                    self.descriptors.len(),
                    self.points.len()
                )));
            }
            let dim = self.descriptor_dim();
            if let Some(d) = self.descriptors.iter().find(|d| d.len() != dim) {
                return Err(IoError::DimensionMismatch {
                    expected: dim,
                    got: d.len(),
                });
            }
        }
        Ok(())
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update((self.points.len() as u64).to_le_bytes());
        for p in &self.points {
            for c in p.iter() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.descriptor_dim() as u64).to_le_bytes());
        for d in &self.descriptors {
            for c in d {
                h.update(c.to_le_bytes());
            }
        }
    }

    /// Digest of the input alone.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"lineloc-input");
        self.hash_into(&mut h);
        hex::encode(h.finalize())
    }

    /// Digest of a particular lifting of the input.
    pub fn lift_digest(&self, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(b"lineloc-lift");
        h.update(seed.to_le_bytes());
        self.hash_into(&mut h);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "lines", rename_all = "snake_case")]
pub enum MapLines {
    Full(Vec<PluckerLine>),
    Compact(Vec<CompactLine>),
}

impl MapLines {
    pub fn len(&self) -> usize {
        match self {
            MapLines::Full(l) => l.len(),
            MapLines::Compact(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> u8 {
        match self {
            MapLines::Full(_) => 0,
            MapLines::Compact(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub version: u32,
    pub descriptor_dim: u32,
    pub input_digest: Option<String>,
    pub lift_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCloudMap {
    pub lines: MapLines,
    pub descriptors: Vec<Vec<f32>>,
    pub metadata: MapMetadata,
}

impl LineCloudMap {
    pub fn new(lines: MapLines, descriptors: Vec<Vec<f32>>) -> Result<Self, IoError> {
        let dim = descriptors.first().map_or(0, Vec::len);
        let map = Self {
            lines,
            descriptors,
            metadata: MapMetadata {
                version: VERSION,
                descriptor_dim: dim as u32,
                input_digest: None,
                lift_digest: None,
            },
        };
        map.validate()?;
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Descriptors are either absent or one per line, of the declared size.
    pub fn validate(&self) -> Result<(), IoError> {
        let dim = self.metadata.descriptor_dim as usize;
        if dim == 0 {
            if self.descriptors.iter().any(|d| !d.is_empty()) {
                return Err(IoError::InvalidInput(
                    "descriptors present with dimension 0".into(),
                ));
            }
            if !self.descriptors.is_empty() && self.descriptors.len() != self.len() {
                return Err(IoError::InvalidInput(
                    "descriptor count differs from line count".into(),
                ));
            }
            return Ok(());
        }
        if self.descriptors.len() != self.len() {
            return Err(IoError::InvalidInput(format!(
                "{} descriptors for {} lines",
                self.descriptors.len(),
                self.len()
            )));
        }
        if let Some(d) = self.descriptors.iter().find(|d| d.len() != dim) {
            return Err(IoError::DimensionMismatch {
                expected: dim,
                got: d.len(),
            });
        }
        Ok(())
    }

    /// All lines in Plücker form (compact lines are decoded).
    pub fn plucker_lines(&self) -> Vec<PluckerLine> {
        match &self.lines {
            MapLines::Full(l) => l.clone(),
            MapLines::Compact(l) => l.iter().map(decode_compact).collect(),
        }
    }

    /// Descriptor of line `i`, empty if the map has none.
    pub fn descriptor(&self, i: usize) -> &[f32] {
        self.descriptors.get(i).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LiftOptions {
    pub compact: bool,
    /// Permit lifting a point set again with a different seed.
    pub allow_relift: bool,
}

/// Lifts every input point to a line through it with a random direction.
///
/// `previous` is an earlier lifting (e.g. the map about to be replaced). If
/// it was made from the same input with a different seed the call fails
/// with [`IoError::RepeatedLiftingRefused`] unless `allow_relift` is set:
/// two independent liftings reveal the points by intersection.
pub fn lift_map(
    input: &PointCloudInput,
    seed: u64,
    options: LiftOptions,
    previous: Option<&LineCloudMap>,
) -> Result<LineCloudMap, IoError> {
    input.validate()?;
    if input.points.is_empty() {
        return Err(IoError::InvalidInput("empty point cloud".into()));
    }
    let input_digest = input.digest();
    let lift_digest = input.lift_digest(seed);
    if let Some(prev) = previous {
        let same_input = prev.metadata.input_digest.as_deref() == Some(input_digest.as_str());
        let same_lift = prev.metadata.lift_digest.as_deref() == Some(lift_digest.as_str());
        if same_input && !same_lift && !options.allow_relift {
            return Err(IoError::RepeatedLiftingRefused);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<PluckerLine> = input
        .points
        .iter()
        .map(|p| lift_point(p, &mut rng))
        .collect();
    let lines = if options.compact {
        MapLines::Compact(lines.iter().map(encode_compact).collect())
    } else {
        MapLines::Full(lines)
    };
    let mut map = LineCloudMap::new(lines, input.descriptors.clone())?;
    map.metadata.input_digest = Some(input_digest);
    map.metadata.lift_digest = Some(lift_digest);
    Ok(map)
}
