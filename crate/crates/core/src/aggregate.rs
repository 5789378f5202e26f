//! Average saliency in the canonical object frame, and the split of
//! explained detections into true and false positives.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::detection::{ClassLabel, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{CanonicalSample, OrientedBox};
use crate::metrics::{well_detected, EvalThresholds};

pub const DEFAULT_RESOLUTION: u32 = 32;

/// Saliency sums are kept as integers in units of 2⁻⁶⁴ so that merging and
/// accumulation order cannot change the result.
const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0;

/// Dense `r³` accumulator over `[-0.5, 0.5]³`, cells ordered x-fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalGrid {
    resolution: u32,
    sums: Vec<u128>,
    counts: Vec<u32>,
    discarded: u64,
}

impl CanonicalGrid {
    pub fn new(resolution: u32) -> Result<Self> {
        if !(2..=1024).contains(&resolution) {
            return Err(Error::InvalidConfig(format!(
                "canonical resolution {resolution} outside 2..=1024"
            )));
        }
        let cells = (resolution as usize).pow(3);
        Ok(Self {
            resolution,
            sums: vec![0; cells],
            counts: vec![0; cells],
            discarded: 0,
        })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn index(&self, ix: u32, iy: u32, iz: u32) -> usize {
        let r = self.resolution as usize;
        ix as usize + r * (iy as usize + r * iz as usize)
    }

    /// Cell holding a canonical position; faces at ±0.5 belong to the grid.
    pub fn cell_of(&self, q: [f64; 3]) -> Option<usize> {
        let r = self.resolution;
        let mut idx = [0u32; 3];
        for (slot, v) in idx.iter_mut().zip(q) {
            if !(-0.5..=0.5).contains(&v) {
                return None;
            }
            *slot = (((v + 0.5) * f64::from(r)).floor() as u32).min(r - 1);
        }
        Some(self.index(idx[0], idx[1], idx[2]))
    }

    pub fn cell_center(&self, index: usize) -> [f64; 3] {
        let r = self.resolution as usize;
        let c = [index % r, (index / r) % r, index / (r * r)];
        c.map(|i| (i as f64 + 0.5) / r as f64 - 0.5)
    }

    pub fn add(&mut self, sample: &CanonicalSample) {
        match self.cell_of(sample.position) {
            Some(i) => {
                self.sums[i] += (sample.saliency.max(0.0) * FIXED_SCALE).round() as u128;
                self.counts[i] += 1;
            }
            None => self.discarded += 1,
        }
    }

    pub fn accumulate(&mut self, samples: &[CanonicalSample]) {
        for s in samples {
            self.add(s);
        }
    }

    pub fn merge(&mut self, other: &CanonicalGrid) -> Result<()> {
        if other.resolution != self.resolution {
            return Err(Error::ShapeMismatch(format!(
                "cannot merge resolution {} into {}",
                other.resolution, self.resolution
            )));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.discarded += other.discarded;
        Ok(())
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Samples that fell outside the canonical cube.
    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    pub fn total_ingested(&self) -> u64 {
        self.counts.iter().map(|c| u64::from(*c)).sum::<u64>() + self.discarded
    }

    /// Mean saliency per cell; empty cells are 0.
    pub fn averages(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(s, c)| {
                if *c == 0 {
                    0.0
                } else {
                    *s as f64 / FIXED_SCALE / f64::from(*c)
                }
            })
            .collect()
    }

    pub fn finalize(&self) -> CanonicalMap {
        CanonicalMap {
            resolution: self.resolution,
            averages: self.averages().iter().map(|v| *v as f32).collect(),
            counts: self.counts.clone(),
        }
    }
}

/// A finalized grid as exported: per-cell average and point count.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalMap {
    pub resolution: u32,
    pub averages: Vec<f32>,
    pub counts: Vec<u32>,
}

impl CanonicalMap {
    /// `u32 r`, then `r³` f32 averages, then `r³` u32 counts, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.averages.len());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for v in &self.averages {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedFile {
            path: Default::default(),
            reason: reason.to_string(),
        };
        let head: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("missing resolution header"))?;
        let resolution = u32::from_le_bytes(head);
        if !(2..=1024).contains(&resolution) {
            return Err(bad("resolution outside 2..=1024"));
        }
        let cells = (resolution as usize).pow(3);
        if bytes.len() != 4 + 8 * cells {
            return Err(bad("length does not match resolution"));
        }
        let words = |start: usize| {
            bytes[start..start + 4 * cells]
                .chunks_exact(4)
                .map(|c| <[u8; 4]>::try_from(c).expect("4 bytes"))
        };
        Ok(Self {
            resolution,
            averages: words(4).map(f32::from_le_bytes).collect(),
            counts: words(4 + 4 * cells).map(u32::from_le_bytes).collect(),
        })
    }

    /// `x,y,z,value,count` per occupied cell, at the cell center.
    pub fn to_csv(&self) -> String {
        let r = self.resolution as usize;
        let mut out = String::from("x,y,z,value,count\n");
        for (i, (v, c)) in self.averages.iter().zip(&self.counts).enumerate() {
            if *c == 0 {
                continue;
            }
            let q = [i % r, (i / r) % r, i / (r * r)].map(|k| (k as f64 + 0.5) / r as f64 - 0.5);
            let _ = writeln!(out, "{},{},{},{},{}", q[0], q[1], q[2], v, c);
        }
        out
    }
}

/// Indices of predictions that are true positives (matched to a ground truth
/// of the same class at or above its threshold) and of the rest.
pub fn tp_fp_split(
    predictions: &[Detection],
    gts: &[GroundTruth],
    thresholds: &EvalThresholds,
) -> (Vec<usize>, Vec<usize>) {
    let matched = well_detected(predictions, gts, thresholds);
    let mut is_tp = vec![false; predictions.len()];
    for m in matched {
        is_tp[m.prediction] = true;
    }
    (0..predictions.len()).partition(|&i| is_tp[i])
}

/// One explained prediction, ready for mode analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainedObject {
    pub class: ClassLabel,
    pub bbox: OrientedBox,
    pub true_positive: bool,
    /// Scene points inside the predicted box.
    pub in_box_points: usize,
    /// Canonical-frame samples of the object's saliency.
    pub samples: Vec<CanonicalSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SetSummary {
    pub objects: usize,
    /// Share of each class among the set's objects.
    pub class_ratios: BTreeMap<ClassLabel, f64>,
    /// Mean in-box point count per object.
    pub mean_points: f64,
    pub mean_points_by_class: BTreeMap<ClassLabel, f64>,
    /// Canonical average map for every class present in the set.
    pub maps: BTreeMap<ClassLabel, CanonicalGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub true_positives: SetSummary,
    pub false_positives: SetSummary,
}

impl ModeReport {
    /// False-positive mean point count relative to the true positives'.
    pub fn density_ratio(&self) -> Option<f64> {
        let tp = self.true_positives.mean_points;
        (self.true_positives.objects > 0 && self.false_positives.objects > 0 && tp > 0.0)
            .then(|| self.false_positives.mean_points / tp)
    }
}

fn summarize(objects: &[&ExplainedObject], resolution: u32) -> Result<SetSummary> {
    let mut s = SetSummary {
        objects: objects.len(),
        ..SetSummary::default()
    };
    if objects.is_empty() {
        return Ok(s);
    }
    let mut per_class: BTreeMap<ClassLabel, (usize, usize)> = BTreeMap::new();
    for o in objects {
        let e = per_class.entry(o.class).or_default();
        e.0 += 1;
        e.1 += o.in_box_points;
        let grid = match s.maps.entry(o.class) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(CanonicalGrid::new(resolution)?),
        };
        grid.accumulate(&o.samples);
    }
    let n = objects.len() as f64;
    for (class, (count, points)) in per_class {
        s.class_ratios.insert(class, count as f64 / n);
        s.mean_points_by_class.insert(class, points as f64 / count as f64);
    }
    s.mean_points = objects.iter().map(|o| o.in_box_points as f64).sum::<f64>() / n;
    Ok(s)
}

pub fn mode_report(objects: &[ExplainedObject], resolution: u32) -> Result<ModeReport> {
    let (tp, fp): (Vec<&ExplainedObject>, Vec<&ExplainedObject>) =
        objects.iter().partition(|o| o.true_positive);
    Ok(ModeReport {
        true_positives: summarize(&tp, resolution)?,
        false_positives: summarize(&fp, resolution)?,
    })
}
