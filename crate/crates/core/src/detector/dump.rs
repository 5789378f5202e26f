//! Binary feature dumps: one block's sparse features, the detections and any
//! number of per-(detection, mask) gradients, exported from a detector so the
//! explanation can be recomputed without it.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"FFDP"  u32 version (1)
//! f64 × 7  voxel_size, x_lo, x_hi, y_lo, y_hi, z_lo, z_hi
//! u32      block
//! u64 M, u64 d
//! i32 × 3M coordinates
//! f32 × Md features
//! u64 D, then per detection: f32 × 8 (x y z l w h yaw score), u32 class id
//! u64 G, then per gradient: u32 detection index, u32 mask bits, f32 × Md
//! ```

use std::path::Path;

use super::{check_block, Detector, FeatureMap, GradientMap};
use crate::cloud::PointCloud;
use crate::detection::{AttributeMask, ClassLabel, Detection};
use crate::error::{Error, Result};
use crate::voxel::{GridSpec, SparseVoxelMap, VoxelCoord};

const MAGIC: &[u8; 4] = b"FFDP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub detection: u32,
    pub mask: AttributeMask,
    /// `M × d`, row-major.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub grid: GridSpec,
    pub block: u8,
    pub coords: Vec<VoxelCoord>,
    pub feature_dim: usize,
    /// `M × d`, row-major.
    pub features: Vec<f32>,
    pub detections: Vec<Detection>,
    pub gradients: Vec<GradientRecord>,
}

impl FeatureDump {
    pub fn validate(&self) -> Result<()> {
        let cells = self.coords.len() * self.feature_dim;
        if self.features.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates × {} channels but {} feature values",
                self.coords.len(),
                self.feature_dim,
                self.features.len()
            )));
        }
        for g in &self.gradients {
            if g.values.len() != cells {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for detection {} has {} values, expected {cells}",
                    g.detection,
                    g.values.len()
                )));
            }
            if g.detection as usize >= self.detections.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient refers to detection {} of {}",
                    g.detection,
                    self.detections.len()
                )));
            }
        }
        Ok(())
    }

    /// Records `det`'s view of `cloud`: features of `block`, all detections and
    /// the gradient of every detection under every mask in `masks`.
    pub fn capture(
        det: &dyn Detector,
        cloud: &PointCloud,
        block: u8,
        masks: &[AttributeMask],
    ) -> Result<Self> {
        let features = det.features(cloud, block)?;
        let detections = det.detect(cloud)?;
        let mut gradients = Vec::new();
        for (i, d) in detections.iter().enumerate() {
            for &mask in masks {
                let g = det.gradient(cloud, d, mask, block)?;
                gradients.push(GradientRecord {
                    detection: i as u32,
                    mask,
                    values: g.payload().iter().flatten().map(|v| *v as f32).collect(),
                });
            }
        }
        let feature_dim = features.payload().first().map_or(0, Vec::len);
        Ok(Self {
            grid: *features.grid(),
            block,
            coords: features.coords().to_vec(),
            feature_dim,
            features: features.payload().iter().flatten().map(|v| *v as f32).collect(),
            detections: detections.iter().map(round_detection).collect(),
            gradients,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let g = &self.grid;
        for v in [
            g.voxel_size,
            g.x_range.0,
            g.x_range.1,
            g.y_range.0,
            g.y_range.1,
            g.z_range.0,
            g.z_range.1,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&u32::from(self.block).to_le_bytes());
        out.extend_from_slice(&(self.coords.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.feature_dim as u64).to_le_bytes());
        for c in &self.coords {
            for v in [c.ix, c.iy, c.iz] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_f32s(&mut out, &self.features);
        out.extend_from_slice(&(self.detections.len() as u64).to_le_bytes());
        for d in &self.detections {
            put_f32s(&mut out, &d.attributes().map(|v| v as f32));
            out.extend_from_slice(&d.class.id().to_le_bytes());
        }
        out.extend_from_slice(&(self.gradients.len() as u64).to_le_bytes());
        for r in &self.gradients {
            out.extend_from_slice(&r.detection.to_le_bytes());
            out.extend_from_slice(&r.mask.bits().to_le_bytes());
            put_f32s(&mut out, &r.values);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::MalformedDump("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::MalformedDump(format!("unsupported version {version}")));
        }
        let mut g = [0.0; 7];
        for v in &mut g {
            *v = r.f64()?;
        }
        let grid = GridSpec::new(g[0], (g[1], g[2]), (g[3], g[4]), (g[5], g[6]))
            .map_err(|e| Error::MalformedDump(e.to_string()))?;
        let block = u8::try_from(r.u32()?)
            .ok()
            .filter(|b| check_block(*b).is_ok())
            .ok_or_else(|| Error::MalformedDump("block index outside 1..=4".into()))?;
        let m = r.count(12)?;
        let d = r.u64()?;
        let cells = m
            .checked_mul(usize::try_from(d).unwrap_or(usize::MAX))
            .ok_or_else(|| Error::MalformedDump("feature size overflows".into()))?;
        let d = d as usize;
        let mut coords = Vec::with_capacity(m);
        for _ in 0..m {
            coords.push(VoxelCoord::new(r.i32()?, r.i32()?, r.i32()?));
        }
        let features = r.f32s(cells)?;

        let n_det = r.count(36)?;
        let mut detections = Vec::with_capacity(n_det);
        for i in 0..n_det {
            let a = r.f32s(8)?;
            let class = ClassLabel::from_id(r.u32()?)
                .ok_or_else(|| Error::MalformedDump(format!("detection {i}: unknown class")))?;
            let det = Detection {
                center: [a[0], a[1], a[2]].map(f64::from),
                size: [a[3], a[4], a[5]].map(f64::from),
                yaw: f64::from(a[6]),
                score: f64::from(a[7]),
                class,
            };
            det.validate()
                .map_err(|e| Error::MalformedDump(format!("detection {i}: {e}")))?;
            detections.push(det);
        }

        let n_grad = r.count(8usize.saturating_add(cells.saturating_mul(4)))?;
        let mut gradients = Vec::with_capacity(n_grad);
        for _ in 0..n_grad {
            let detection = r.u32()?;
            let mask = AttributeMask::from_bits(r.u32()?)
                .map_err(|e| Error::MalformedDump(format!("gradient mask: {e}")))?;
            gradients.push(GradientRecord {
                detection,
                mask,
                values: r.f32s(cells)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedDump(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(m);
        if !coords.iter().all(|c| seen.insert(*c)) {
            return Err(Error::MalformedDump("duplicate voxel coordinates".into()));
        }
        let dump = Self {
            grid,
            block,
            coords,
            feature_dim: d,
            features,
            detections,
            gradients,
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    fn rows(&self, values: &[f32]) -> SparseVoxelMap<Vec<f64>> {
        let rows = if self.feature_dim == 0 {
            vec![Vec::new(); self.coords.len()]
        } else {
            values
                .chunks_exact(self.feature_dim)
                .map(|r| r.iter().map(|v| f64::from(*v)).collect())
                .collect()
        };
        SparseVoxelMap::new(self.grid, self.coords.clone(), rows).expect("validated on load")
    }
}

/// Reads a dump written by [`FeatureDump::save`].
pub fn load_dump(path: &Path) -> Result<DumpDetector> {
    let bytes = std::fs::read(path)?;
    Ok(DumpDetector {
        dump: FeatureDump::from_bytes(&bytes)?,
    })
}

/// Replays a [`FeatureDump`]. The cloud argument is ignored: the dump already
/// describes one specific scene.
#[derive(Debug, Clone)]
pub struct DumpDetector {
    pub dump: FeatureDump,
}

impl DumpDetector {
    pub fn new(dump: FeatureDump) -> Result<Self> {
        dump.validate()?;
        Ok(Self { dump })
    }

    fn check_block(&self, block: u8) -> Result<()> {
        if block == self.dump.block {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "dump holds block {}, block {block} requested",
                self.dump.block
            )))
        }
    }
}

impl Detector for DumpDetector {
    fn detect(&self, _cloud: &PointCloud) -> Result<Vec<Detection>> {
        Ok(self.dump.detections.clone())
    }

    fn features(&self, _cloud: &PointCloud, block: u8) -> Result<FeatureMap> {
        self.check_block(block)?;
        Ok(self.dump.rows(&self.dump.features))
    }

    fn gradient(
        &self,
        _cloud: &PointCloud,
        detection: &Detection,
        mask: AttributeMask,
        block: u8,
    ) -> Result<GradientMap> {
        self.check_block(block)?;
        let target = round_detection(detection);
        let index = self
            .dump
            .detections
            .iter()
            .position(|d| *d == target)
            .ok_or_else(|| {
                Error::DetectionNotFound(format!("{} not present in the dump", detection.class))
            })?;
        let record = self
            .dump
            .gradients
            .iter()
            .find(|g| g.detection as usize == index && g.mask == mask)
            .ok_or(Error::MissingGradient {
                detection: index,
                mask: mask.bits(),
            })?;
        Ok(self.dump.rows(&record.values))
    }
}

/// A detection as it reads back from a dump (every attribute rounded to `f32`).
fn round_detection(d: &Detection) -> Detection {
    let r = |v: f64| f64::from(v as f32);
    Detection {
        center: d.center.map(r),
        size: d.size.map(r),
        yaw: r(d.yaw),
        score: r(d.score),
        class: d.class,
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| {
                Error::MalformedDump(format!("truncated: needed {n} bytes at offset {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Reads a u64 count and checks that `count × item_bytes` still fits in the file.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.saturating_mul(item_bytes as u64) > remaining {
            return Err(Error::MalformedDump(format!(
                "count {n} exceeds the {remaining} bytes left"
            )));
        }
        Ok(n as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).unwrap_or(usize::MAX))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
