//! File formats: KITTI velodyne scans, box lists as JSON, saliency exports.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use crate::cloud::{Point, PointCloud, SaliencyMap};
use crate::detection::{ClassLabel, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::scene::SceneRecord;

const KITTI_RECORD: usize = 16;

/// Little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn read_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_kitti_bin(&fs::read(path)?, path)
}

/// Parses the bytes of a KITTI scan; `path` only labels errors.
pub fn parse_kitti_bin(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if bytes.len() % KITTI_RECORD != 0 {
        return Err(Error::MalformedFile {
            path: path.to_path_buf(),
            reason: format!("length {} is not a multiple of {KITTI_RECORD}", bytes.len()),
        });
    }
    let points = bytes
        .chunks_exact(KITTI_RECORD)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Coordinates and intensities are stored as `f32`.
pub fn kitti_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * KITTI_RECORD);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    fs::write(path, kitti_bytes(cloud))?;
    Ok(())
}

fn violation(path: String, reason: impl Into<String>) -> Error {
    Error::SchemaViolation {
        path,
        reason: reason.into(),
    }
}

fn field<'a>(obj: &'a Value, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| violation(format!("{at}.{key}"), "missing field"))
}

fn number(v: &Value, at: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| violation(at.to_string(), "expected a finite number"))
}

fn triple(obj: &Value, key: &str, at: &str) -> Result<[f64; 3]> {
    let path = format!("{at}.{key}");
    let arr = field(obj, key, at)?
        .as_array()
        .filter(|a| a.len() == 3)
        .ok_or_else(|| violation(path.clone(), "expected an array of 3 numbers"))?;
    let mut out = [0.0; 3];
    for (i, v) in arr.iter().enumerate() {
        out[i] = number(v, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

struct RawBox {
    bbox: OrientedBox,
    score: Option<f64>,
    class: ClassLabel,
}

fn parse_box(rec: &Value, at: &str) -> Result<RawBox> {
    if !rec.is_object() {
        return Err(violation(at.to_string(), "expected an object"));
    }
    let center = triple(rec, "center", at)?;
    let size = triple(rec, "size", at)?;
    if let Some(i) = size.iter().position(|s| *s <= 0.0) {
        return Err(violation(format!("{at}.size[{i}]"), "box sizes must be positive"));
    }
    let yaw = number(field(rec, "yaw", at)?, &format!("{at}.yaw"))?;
    let score = match rec.get("score") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = number(v, &format!("{at}.score"))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(violation(format!("{at}.score"), "score must lie in [0, 1]"));
            }
            Some(s)
        }
    };
    let class = field(rec, "class", at)?
        .as_str()
        .ok_or_else(|| violation(format!("{at}.class"), "expected a string"))?
        .parse::<ClassLabel>()
        .map_err(|e| violation(format!("{at}.class"), e))?;
    Ok(RawBox {
        bbox: OrientedBox { center, size, yaw },
        score,
        class,
    })
}

fn parse_boxes(text: &str) -> Result<Vec<RawBox>> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| violation("$".into(), format!("invalid JSON: {e}")))?;
    let arr = doc
        .as_array()
        .ok_or_else(|| violation("$".into(), "expected an array of boxes"))?;
    arr.iter()
        .enumerate()
        .map(|(i, rec)| parse_box(rec, &format!("$[{i}]")))
        .collect()
}

/// Detections without a `score` field get score 1.
pub fn parse_detections_json(text: &str) -> Result<Vec<Detection>> {
    Ok(parse_boxes(text)?
        .into_iter()
        .map(|b| Detection {
            center: b.bbox.center,
            size: b.bbox.size,
            yaw: b.bbox.yaw,
            score: b.score.unwrap_or(1.0),
            class: b.class,
        })
        .collect())
}

/// Ground-truth boxes; a `score` field is accepted and ignored.
pub fn parse_labels_json(text: &str) -> Result<Vec<GroundTruth>> {
    Ok(parse_boxes(text)?
        .into_iter()
        .map(|b| GroundTruth {
            bbox: b.bbox,
            class: b.class,
        })
        .collect())
}

pub fn read_detections_json(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    parse_detections_json(&fs::read_to_string(path)?)
}

pub fn read_labels_json(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    parse_labels_json(&fs::read_to_string(path)?)
}

pub fn detections_to_json(dets: &[Detection]) -> String {
    let arr: Vec<Value> = dets
        .iter()
        .map(|d| {
            json!({
                "center": d.center,
                "size": d.size,
                "yaw": d.yaw,
                "score": d.score,
                "class": d.class.name(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&arr).expect("plain values serialize")
}

pub fn labels_to_json(gts: &[GroundTruth]) -> String {
    let arr: Vec<Value> = gts
        .iter()
        .map(|g| {
            json!({
                "center": g.bbox.center,
                "size": g.bbox.size,
                "yaw": g.bbox.yaw,
                "class": g.class.name(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&arr).expect("plain values serialize")
}

pub fn write_detections_json(path: impl AsRef<Path>, dets: &[Detection]) -> Result<()> {
    fs::write(path, detections_to_json(dets))?;
    Ok(())
}

pub fn write_labels_json(path: impl AsRef<Path>, gts: &[GroundTruth]) -> Result<()> {
    fs::write(path, labels_to_json(gts))?;
    Ok(())
}

/// A scan plus its label file. The scene id is the scan's file stem.
pub fn load_scene(bin: impl AsRef<Path>, labels: Option<&Path>) -> Result<SceneRecord> {
    let bin = bin.as_ref();
    let scene_id = bin
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SceneRecord {
        scene_id,
        cloud: read_kitti_bin(bin)?,
        ground_truth: match labels {
            Some(p) => read_labels_json(p)?,
            None => Vec::new(),
        },
        source: Some(bin.to_path_buf()),
    })
}

/// Every `*.bin` in `dir` with its sibling `*.json` label file, sorted by scene id.
pub fn load_scene_dir(dir: impl AsRef<Path>) -> Result<Vec<SceneRecord>> {
    let mut bins: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    bins.retain(|p| p.extension().is_some_and(|e| e == "bin"));
    bins.sort();
    bins.iter()
        .map(|bin| {
            let labels = bin.with_extension("json");
            load_scene(bin, labels.exists().then_some(labels.as_path()))
        })
        .collect()
}

/// Writes a scene as `<dir>/<scene_id>.bin` and `<dir>/<scene_id>.json`.
pub fn save_scene(dir: impl AsRef<Path>, scene: &SceneRecord) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_kitti_bin(dir.join(format!("{}.bin", scene.scene_id)), &scene.cloud)?;
    write_labels_json(dir.join(format!("{}.json", scene.scene_id)), &scene.ground_truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaliencyFormat {
    Csv,
    Ply,
}

impl SaliencyFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl fmt::Display for SaliencyFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SaliencyFormat::Csv => "csv",
            SaliencyFormat::Ply => "ply",
        })
    }
}

impl FromStr for SaliencyFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(SaliencyFormat::Csv),
            "ply" => Ok(SaliencyFormat::Ply),
            other => Err(Error::InvalidConfig(format!("unknown saliency format '{other}'"))),
        }
    }
}

/// Six significant digits.
fn score_text(v: f64) -> String {
    format!("{v:.5e}")
}

pub fn saliency_to_writer(
    cloud: &PointCloud,
    saliency: &SaliencyMap,
    format: SaliencyFormat,
    out: &mut impl Write,
) -> Result<()> {
    saliency.check_aligned(cloud)?;
    match format {
        SaliencyFormat::Csv => {
            writeln!(out, "index,x,y,z,score")?;
            for (i, (p, s)) in cloud.iter().zip(&saliency.scores).enumerate() {
                writeln!(out, "{i},{},{},{},{}", p.x, p.y, p.z, score_text(*s))?;
            }
        }
        SaliencyFormat::Ply => {
            writeln!(out, "ply")?;
            writeln!(out, "format ascii 1.0")?;
            writeln!(out, "element vertex {}", cloud.len())?;
            for name in ["x", "y", "z"] {
                writeln!(out, "property double {name}")?;
            }
            writeln!(out, "property float scalar_saliency")?;
            writeln!(out, "end_header")?;
            for (p, s) in cloud.iter().zip(&saliency.scores) {
                writeln!(out, "{} {} {} {}", p.x, p.y, p.z, score_text(*s))?;
            }
        }
    }
    Ok(())
}

pub fn write_saliency(
    cloud: &PointCloud,
    saliency: &SaliencyMap,
    format: SaliencyFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    saliency.check_aligned(cloud)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    saliency_to_writer(cloud, saliency, format, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Points (intensity 0) and scores from a saliency CSV.
pub fn parse_saliency_csv(text: &str, path: &Path) -> Result<(PointCloud, SaliencyMap)> {
    let bad = |line: usize, reason: String| Error::MalformedFile {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some("index,x,y,z,score") {
        return Err(bad(1, "expected header 'index,x,y,z,score'".into()));
    }
    let mut points = Vec::new();
    let mut scores = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(n + 2, format!("expected 5 fields, found {}", fields.len())));
        }
        if fields[0].parse::<usize>().ok() != Some(n) {
            return Err(bad(n + 2, format!("expected index {n}")));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad(n + 2, format!("'{f}' is not a number")))?;
        }
        points.push(Point::new(v[0], v[1], v[2], 0.0));
        scores.push(v[3]);
    }
    Ok((PointCloud::new(points), SaliencyMap::new(scores)))
}

pub fn read_saliency_csv(path: impl AsRef<Path>) -> Result<(PointCloud, SaliencyMap)> {
    let path = path.as_ref();
    parse_saliency_csv(&fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kitti(values: &[f32]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn kitti_examples() {
        let p = Path::new("scan.bin");
        let one = parse_kitti_bin(&kitti(&[1.0, 2.0, 3.0, 0.5]), p).unwrap();
        assert_eq!(one.points, vec![Point::new(1.0, 2.0, 3.0, 0.5)]);
        assert!(parse_kitti_bin(&[], p).unwrap().is_empty());
        let err = parse_kitti_bin(&[0u8; 17], p).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { .. }), "{err}");
    }

    #[test]
    fn kitti_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let cloud = PointCloud::new(vec![Point::new(0.25, -3.5, 1.0, 0.75), Point::new(9.0, 8.0, -1.5, 0.0)]);
        write_kitti_bin(&path, &cloud).unwrap();
        assert_eq!(read_kitti_bin(&path).unwrap(), cloud);
        assert!(read_kitti_bin(dir.path().join("missing.bin")).unwrap_err().is_io());
    }

    #[test]
    fn minimal_detection_parses() {
        let d = parse_detections_json(r#"[{"center":[1,2,3],"size":[4,2,1.5],"yaw":0.1,"class":"Car"}]"#)
            .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].score, 1.0);
        assert_eq!(d[0].class, ClassLabel::Car);
        assert_eq!(d[0].size, [4.0, 2.0, 1.5]);
    }

    fn violation_path(text: &str) -> String {
        match parse_detections_json(text).unwrap_err() {
            Error::SchemaViolation { path, .. } => path,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn schema_violations_name_the_field() {
        assert_eq!(
            violation_path(r#"[{"center":[1,2,3],"size":[-4,2,1.5],"yaw":0,"class":"Car"}]"#),
            "$[0].size[0]"
        );
        assert_eq!(
            violation_path(r#"[{"center":[1,2,3],"size":[4,2,1.5],"yaw":0}]"#),
            "$[0].class"
        );
        assert_eq!(
            violation_path(r#"[{"center":[1,2,3],"size":[4,2,1.5],"yaw":0,"class":"Car"},{"center":[1,2],"size":[1,1,1],"yaw":0,"class":"Car"}]"#),
            "$[1].center"
        );
        assert_eq!(
            violation_path(r#"[{"center":[1,2,3],"size":[4,2,1.5],"yaw":0,"score":1.5,"class":"Car"}]"#),
            "$[0].score"
        );
        assert_eq!(
            violation_path(r#"[{"center":[1,2,3],"size":[4,2,1.5],"yaw":0,"class":"Truck"}]"#),
            "$[0].class"
        );
        assert_eq!(violation_path(r#"{"center":[1,2,3]}"#), "$");
        assert_eq!(violation_path("not json"), "$");
    }

    #[test]
    fn box_json_round_trip() {
        let dets = vec![Detection {
            center: [1.0 / 3.0, -2.5, 0.1],
            size: [3.9, 1.6, 1.56],
            yaw: -0.3,
            score: 0.875,
            class: ClassLabel::Cyclist,
        }];
        assert_eq!(parse_detections_json(&detections_to_json(&dets)).unwrap(), dets);
        let gts = vec![GroundTruth {
            bbox: OrientedBox::new([5.0, 1.0, -1.0], [0.8, 0.6, 1.73], 1.2).unwrap(),
            class: ClassLabel::Pedestrian,
        }];
        assert_eq!(parse_labels_json(&labels_to_json(&gts)).unwrap(), gts);
    }

    #[test]
    fn one_point_csv_has_two_lines() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0, 0.0)]);
        let mut buf = Vec::new();
        saliency_to_writer(&cloud, &SaliencyMap::new(vec![0.5]), SaliencyFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,x,y,z,score\n0,1,2,3,5.00000e-1\n");
    }

    #[test]
    fn ply_vertex_count_matches_cloud() {
        let cloud = PointCloud::new(vec![Point::default(); 7]);
        let mut buf = Vec::new();
        saliency_to_writer(&cloud, &SaliencyMap::new(vec![0.1; 7]), SaliencyFormat::Ply, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("element vertex 7\n"));
        assert!(text.contains("property float scalar_saliency\n"));
        let body = text.split("end_header\n").nth(1).unwrap();
        assert_eq!(body.lines().count(), 7);
    }

    #[test]
    fn misaligned_saliency_is_rejected() {
        let cloud = PointCloud::new(vec![Point::default(); 2]);
        let mut buf = Vec::new();
        assert!(saliency_to_writer(&cloud, &SaliencyMap::new(vec![1.0]), SaliencyFormat::Csv, &mut buf).is_err());
    }

    #[test]
    fn csv_reader_rejects_bad_rows() {
        let p = Path::new("s.csv");
        assert!(parse_saliency_csv("x\n", p).is_err());
        assert!(parse_saliency_csv("index,x,y,z,score\n1,0,0,0,1\n", p).is_err());
        assert!(parse_saliency_csv("index,x,y,z,score\n0,0,0,0\n", p).is_err());
        let (c, s) = parse_saliency_csv("index,x,y,z,score\n0,1,2,3,4.5e-1\n", p).unwrap();
        assert_eq!(c.points[0].xyz(), [1.0, 2.0, 3.0]);
        assert_eq!(s.scores, vec![0.45]);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(SaliencyFormat::from_path(Path::new("a/b.PLY")), Some(SaliencyFormat::Ply));
        assert_eq!(SaliencyFormat::from_path(Path::new("b.csv")), Some(SaliencyFormat::Csv));
        assert_eq!(SaliencyFormat::from_path(Path::new("b.txt")), None);
    }
}
