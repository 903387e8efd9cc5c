//! Text inputs: point CSV, rig JSON, observation CSV and gravity strings.
//!
//! CSV files may start with a header row and may contain `#` comment lines.
//! A first row whose leading field is not a number is taken as the header.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{IoError, PointCloudInput};
use crate::geom::{GravityPrior, Intrinsics, Observation2D, PoseSE3, RigCalibration, RigCamera};

struct Table {
    header: Option<Vec<String>>,
    /// (1-based line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if fields.iter().all(String::is_empty) {
            continue;
        }
        if i == 0 && fields[0].parse::<f64>().is_err() {
            header = Some(fields.iter().map(|f| f.to_ascii_lowercase()).collect());
            continue;
        }
        rows.push((line, fields));
    }
    Ok(Table { header, rows })
}

fn parse_f64(line: usize, field: &str) -> Result<f64, IoError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IoError::Parse {
            line,
            message: format!("expected a finite number, got {field:?}"),
        }),
    }
}

fn parse_f32(line: usize, field: &str) -> Result<f32, IoError> {
    match field.parse::<f32>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IoError::Parse {
            line,
            message: format!("expected a finite descriptor value, got {field:?}"),
        }),
    }
}

/// Checks that every row has the same number of fields, at least `min`.
fn common_width(table: &Table, min: usize) -> Result<usize, IoError> {
    let Some((_, first)) = table.rows.first() else {
        return Err(IoError::InvalidInput("file has no data rows".into()));
    };
    let width = first.len();
    for (line, r) in &table.rows {
        if r.len() < min {
            return Err(IoError::Parse {
                line: *line,
                message: format!("expected at least {min} fields, got {}", r.len()),
            });
        }
        if r.len() != width {
            return Err(IoError::Parse {
                line: *line,
                message: format!(
                    "expected {width} fields like the first row, got {}",
                    r.len()
                ),
            });
        }
    }
    Ok(width)
}

/// Reads `x,y,z[,d0,...,dk]` rows.
pub fn read_point_csv(path: &Path) -> Result<PointCloudInput, IoError> {
    let table = read_table(path)?;
    let width = common_width(&table, 3)?;
    let mut input = PointCloudInput::default();
    for (line, r) in &table.rows {
        input.points.push(Vector3::new(
            parse_f64(*line, &r[0])?,
            parse_f64(*line, &r[1])?,
            parse_f64(*line, &r[2])?,
        ));
        if width > 3 {
            input.descriptors.push(
                r[3..]
                    .iter()
                    .map(|f| parse_f32(*line, f))
                    .collect::<Result<_, _>>()?,
            );
        }
    }
    input.validate()?;
    Ok(input)
}

pub fn write_point_csv(input: &PointCloudInput, path: &Path) -> Result<(), IoError> {
    input.validate()?;
    let mut w = csv::Writer::from_path(path)?;
    let dim = input.descriptor_dim();
    let mut header = vec!["x".to_string(), "y".into(), "z".into()];
    header.extend((0..dim).map(|k| format!("d{k}")));
    w.write_record(&header)?;
    for (i, p) in input.points.iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(f64::to_string).collect();
        if dim > 0 {
            rec.extend(input.descriptors[i].iter().map(f32::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One rig camera: body-to-camera rotation as a unit quaternion `[w, x, y, z]`,
/// translation, and pinhole intrinsics in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigJson {
    pub cameras: Vec<CameraJson>,
}

impl RigJson {
    pub fn from_rig(rig: &RigCalibration) -> Self {
        let cameras = rig
            .cameras()
            .iter()
            .map(|c| {
                let mut q = UnitQuaternion::from_rotation_matrix(&c.pose.rotation);
                if q.w < 0.0 {
                    q = UnitQuaternion::new_unchecked(-q.into_inner());
                }
                let t = c.pose.translation;
                CameraJson {
                    rotation: [q.w, q.i, q.j, q.k],
                    translation: [t.x, t.y, t.z],
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn to_rig(&self) -> Result<RigCalibration, IoError> {
        let mut cameras = Vec::with_capacity(self.cameras.len());
        for (i, c) in self.cameras.iter().enumerate() {
            let [w, x, y, z] = c.rotation;
            let q = Quaternion::new(w, x, y, z);
            let all = c
                .rotation
                .iter()
                .chain(&c.translation)
                .chain([&c.fx, &c.fy, &c.cx, &c.cy]);
            if !all.clone().all(|v| v.is_finite()) || q.norm() < 1e-9 {
                return Err(IoError::InvalidInput(format!(
                    "camera {i}: invalid rotation or non-finite value"
                )));
            }
            let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
            cameras.push(RigCamera {
                pose: PoseSE3::new(rotation, Vector3::from(c.translation)),
                intrinsics: Intrinsics::new(c.fx, c.fy, c.cx, c.cy),
            });
        }
        RigCalibration::new(cameras).map_err(|e| IoError::InvalidInput(e.to_string()))
    }
}

pub fn read_rig(path: &Path) -> Result<RigCalibration, IoError> {
    let rig: RigJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    rig.to_rig()
}

pub fn write_rig(rig: &RigCalibration, path: &Path) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(&RigJson::from_rig(rig))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Query observations in pixels, as read from `cam_index,u_px,v_px[,depth][,d0..dk]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationInput {
    pub cameras: Vec<usize>,
    pub pixels: Vec<[f64; 2]>,
    /// Empty, or one entry per observation.
    pub depths: Vec<f64>,
    /// Empty, or one descriptor per observation.
    pub descriptors: Vec<Vec<f32>>,
}

impl ObservationInput {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn has_depth(&self) -> bool {
        !self.depths.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    /// Normalized observations using the rig intrinsics.
    pub fn normalized(&self, rig: &RigCalibration) -> Result<Vec<Observation2D>, IoError> {
        (0..self.len())
            .map(|i| {
                let cam = rig
                    .camera(self.cameras[i])
                    .map_err(|e| IoError::InvalidInput(e.to_string()))?;
                let [u, v] = self.pixels[i];
                let n = cam.intrinsics.normalize(u, v);
                Ok(match self.depths.get(i) {
                    Some(&d) => Observation2D::with_depth(n.x, n.y, d),
                    None => Observation2D::new(n.x, n.y),
                })
            })
            .collect()
    }
}

/// Reads an observation CSV. A depth column is present if the header names
/// its fourth column `depth`, or, without a header, if `has_depth` is set.
pub fn read_observations(path: &Path, has_depth: bool) -> Result<ObservationInput, IoError> {
    let table = read_table(path)?;
    let has_depth = match &table.header {
        Some(h) => h.get(3).is_some_and(|c| c == "depth"),
        None => has_depth,
    };
    let fixed = if has_depth { 4 } else { 3 };
    let width = common_width(&table, fixed)?;
    let mut obs = ObservationInput::default();
    for (line, r) in &table.rows {
        let cam = r[0].parse::<usize>().map_err(|_| IoError::Parse {
            line: *line,
            message: format!("expected a camera index, got {:?}", r[0]),
        })?;
        obs.cameras.push(cam);
        obs.pixels
            .push([parse_f64(*line, &r[1])?, parse_f64(*line, &r[2])?]);
        if has_depth {
            let d = parse_f64(*line, &r[3])?;
            if d <= 0.0 {
                return Err(IoError::Parse {
                    line: *line,
                    message: format!("depth must be positive, got {d}"),
                });
            }
            obs.depths.push(d);
        }
        if width > fixed {
            obs.descriptors.push(
                r[fixed..]
                    .iter()
                    .map(|f| parse_f32(*line, f))
                    .collect::<Result<_, _>>()?,
            );
        }
    }
    Ok(obs)
}

pub fn write_observations(obs: &ObservationInput, path: &Path) -> Result<(), IoError> {
    let dim = obs.descriptor_dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cam_index".to_string(), "u_px".into(), "v_px".into()];
    if obs.has_depth() {
        header.push("depth".into());
    }
    header.extend((0..dim).map(|k| format!("d{k}")));
    w.write_record(&header)?;
    for i in 0..obs.len() {
        let mut rec = vec![
            obs.cameras[i].to_string(),
            obs.pixels[i][0].to_string(),
            obs.pixels[i][1].to_string(),
        ];
        if obs.has_depth() {
            rec.push(obs.depths[i].to_string());
        }
        if dim > 0 {
            rec.extend(obs.descriptors[i].iter().map(f32::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `gx,gy,gz/gx,gy,gz`: gravity in the map frame, then in the query frame.
pub fn parse_gravity(s: &str) -> Result<GravityPrior, IoError> {
    let bad = || {
        IoError::InvalidInput(format!(
            "gravity must look like gx,gy,gz/gx,gy,gz, got {s:?}"
        ))
    };
    let (a, b) = s.split_once('/').ok_or_else(bad)?;
    let vec = |part: &str| -> Result<Unit<Vector3<f64>>, IoError> {
        let v: Vec<f64> = part
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        if v.len() != 3 || !v.iter().all(|c| c.is_finite()) {
            return Err(bad());
        }
        let v = Vector3::new(v[0], v[1], v[2]);
        if v.norm() < 1e-12 {
            return Err(IoError::InvalidInput(
                "gravity vector has zero length".into(),
            ));
        }
        Ok(Unit::new_normalize(v))
    };
    Ok(GravityPrior::new(vec(a)?, vec(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn point_csv_with_header_and_comments() {
        let (_d, p) = tmp("p.csv", "# scene\nx,y,z,d0\n1,2,3,0.5\n# mid\n4,5,6,1.5\n");
        let inp = read_point_csv(&p).unwrap();
        assert_eq!(
            inp.points,
            vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0)]
        );
        assert_eq!(inp.descriptors, vec![vec![0.5], vec![1.5]]);
    }

    #[test]
    fn point_csv_roundtrip() {
        let inp = PointCloudInput {
            points: vec![
                Vector3::new(0.1, -2.0 / 3.0, 1e-17),
                Vector3::new(5.0, 6.0, 7.0),
            ],
            descriptors: vec![vec![0.25, 1.0 / 3.0], vec![2.0, 3.0]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_point_csv(&inp, &p).unwrap();
        assert_eq!(read_point_csv(&p).unwrap(), inp);
    }

    #[test]
    fn point_csv_errors_name_the_line() {
        let (_d, p) = tmp("p.csv", "1,2,3\n4,5\n");
        assert!(matches!(
            read_point_csv(&p),
            Err(IoError::Parse { line: 2, .. })
        ));
        let (_d, p) = tmp("p.csv", "1,2,3\n4,nan,6\n");
        assert!(matches!(
            read_point_csv(&p),
            Err(IoError::Parse { line: 2, .. })
        ));
        let (_d, p) = tmp("p.csv", "x,y,z\n");
        assert!(read_point_csv(&p).is_err());
    }

    #[test]
    fn rig_json_roundtrip() {
        let rot = nalgebra::Rotation3::from_scaled_axis(Vector3::new(0.1, 2.0, -0.4));
        let rig = RigCalibration::new(vec![
            RigCamera {
                pose: PoseSE3::identity(),
                intrinsics: Intrinsics::new(500.0, 500.0, 320.0, 240.0),
            },
            RigCamera {
                pose: PoseSE3::new(rot, Vector3::new(0.3, 0.0, -0.1)),
                intrinsics: Intrinsics::new(400.0, 410.0, 300.0, 200.0),
            },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rig.json");
        write_rig(&rig, &p).unwrap();
        let back = read_rig(&p).unwrap();
        for (a, b) in rig.cameras().iter().zip(back.cameras()) {
            assert!((a.pose.rotation.matrix() - b.pose.rotation.matrix()).norm() < 1e-14);
            assert_eq!(a.pose.translation, b.pose.translation);
            assert_eq!(a.intrinsics, b.intrinsics);
        }
    }

    #[test]
    fn rig_json_rejects_bad_cameras() {
        let (_d, p) = tmp(
            "r.json",
            r#"{"cameras":[{"rotation":[0,0,0,0],"translation":[0,0,0],"fx":1,"fy":1,"cx":0,"cy":0}]}"#,
        );
        assert!(read_rig(&p).is_err());
        let (_d, p) = tmp(
            "r.json",
            r#"{"cameras":[{"rotation":[1,0,0,0],"translation":[0,0,0],"fx":-1,"fy":1,"cx":0,"cy":0}]}"#,
        );
        assert!(read_rig(&p).is_err());
        let (_d, p) = tmp("r.json", r#"{"cameras":[]}"#);
        assert!(read_rig(&p).is_err());
    }

    #[test]
    fn observations_with_and_without_depth() {
        let (_d, p) = tmp(
            "o.csv",
            "cam_index,u_px,v_px,depth,d0\n0,320,240,2.0,1\n1,10,20,3.5,2\n",
        );
        let o = read_observations(&p, false).unwrap();
        assert_eq!(o.depths, vec![2.0, 3.5]);
        assert_eq!(o.descriptors, vec![vec![1.0], vec![2.0]]);
        let (_d, p) = tmp("o.csv", "0,320,240,2.0\n");
        assert_eq!(
            read_observations(&p, false).unwrap().descriptors,
            vec![vec![2.0]]
        );
        assert_eq!(read_observations(&p, true).unwrap().depths, vec![2.0]);
        let (_d, p) = tmp("o.csv", "0,320,240,-2.0\n");
        assert!(read_observations(&p, true).is_err());
        let (_d, p) = tmp("o.csv", "x,320,240\n1,320,240\n");
        assert_eq!(read_observations(&p, false).unwrap().len(), 1);
        let (_d, p) = tmp(
            "o.csv",
            "0,320,240
-1,320,240
",
        );
        assert!(matches!(
            read_observations(&p, false),
            Err(IoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn observation_roundtrip_and_normalization() {
        let obs = ObservationInput {
            cameras: vec![0, 0],
            pixels: vec![[320.0, 240.0], [820.0, 240.0]],
            depths: vec![1.0, 2.0],
            descriptors: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        write_observations(&obs, &p).unwrap();
        let back = read_observations(&p, false).unwrap();
        assert_eq!(back, obs);
        let rig = RigCalibration::single(Intrinsics::new(500.0, 500.0, 320.0, 240.0));
        let n = back.normalized(&rig).unwrap();
        assert_eq!(n[1], Observation2D::with_depth(1.0, 0.0, 2.0));
        let bad = ObservationInput {
            cameras: vec![3],
            ..obs.clone()
        };
        assert!(bad.normalized(&rig).is_err());
    }

    #[test]
    fn gravity_strings() {
        let g = parse_gravity("0,0,-1/0, 0.0 ,-2").unwrap();
        assert_eq!(g.gravity_map.into_inner(), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(g.gravity_query.into_inner(), Vector3::new(0.0, 0.0, -1.0));
        for s in [
            "0,0,-1",
            "0,0/0,0,1",
            "0,0,0/0,0,1",
            "a,b,c/0,0,1",
            "0,0,1/0,0,inf",
        ] {
            assert!(parse_gravity(s).is_err(), "{s}");
        }
    }
}
