//! Central finite differences against the analytic feature gradient.
//!
//! The perturbed forward pass is evaluated in double-double arithmetic with
//! the network's discrete structure frozen, so the difference quotient is not
//! swamped by `f64` cancellation in the loss.

use super::real::{DoubleDouble, Real};
use super::reference::{Forward, ReferenceDetector, ReferenceDetectorConfig, NUM_BLOCKS};
use super::check_block;
use crate::cloud::PointCloud;
use crate::detection::AttributeMask;
use crate::error::Result;
use crate::scene::{synthetic_scene, SceneConfig};

pub const FD_STEP: f64 = 1e-4;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub block: u8,
    pub detections: usize,
    /// Feature entries compared (voxels × channels × detections).
    pub entries: usize,
    pub max_relative_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares every entry of the block's gradient for every detection in `cloud`.
/// A cloud without detections has nothing to compare and reports error 0.
pub fn grad_check_scene(
    det: &ReferenceDetector,
    cloud: &PointCloud,
    mask: AttributeMask,
    block: u8,
) -> Result<GradCheckReport> {
    check_block(block)?;
    let fwd = det.forward(cloud)?;
    let clusters = det.clusters(&fwd);
    let d = det.feature_dim();
    let lb = block as usize - 1;
    let mut report = GradCheckReport {
        block,
        detections: clusters.len(),
        entries: 0,
        max_relative_error: 0.0,
    };
    for members in &clusters {
        let detection = det.cluster_detection(&fwd, members);
        let analytic = det.gradient_from_forward(&fwd, &detection, mask, block)?;
        let frozen = Frozen::new(det, &fwd, members, mask, lb);
        for c in 0..fwd.levels[lb].len() {
            if !frozen.reaches_cluster(c) {
                // The loss does not depend on this voxel at all.
                for k in 0..d {
                    let err = relative_error(analytic[c * d + k], 0.0);
                    report.max_relative_error = report.max_relative_error.max(err);
                }
                report.entries += d;
                continue;
            }
            for k in 0..d {
                let plus = frozen.loss(c, k, FD_STEP);
                let minus = frozen.loss(c, k, -FD_STEP);
                let numeric = ((plus - minus) / DoubleDouble::from_f64(2.0 * FD_STEP)).to_f64();
                let err = relative_error(analytic[c * d + k], numeric);
                report.max_relative_error = report.max_relative_error.max(err);
                report.entries += 1;
            }
        }
    }
    Ok(report)
}

/// Worst relative error over every block of a seeded synthetic scene, full attribute mask.
pub fn grad_check(cfg: &ReferenceDetectorConfig, scene_seed: u64) -> Result<f64> {
    let det = &ReferenceDetector::new(cfg.clone())?;
    let scene = synthetic_scene(scene_seed, &SceneConfig::gradient_check());
    let mut worst: f64 = 0.0;
    for block in 1..=NUM_BLOCKS as u8 {
        let r = grad_check_scene(det, &scene.cloud, AttributeMask::ALL, block)?;
        worst = worst.max(r.max_relative_error);
    }
    Ok(worst)
}

/// The forward pass from one block upward with ReLU gates and cluster
/// membership fixed at their unperturbed values.
struct Frozen<'a> {
    det: &'a ReferenceDetector,
    fwd: &'a Forward,
    lb: usize,
    mask: AttributeMask,
    /// `levels[l - lb]` holds block `l`'s output in extended precision.
    levels: Vec<Vec<DoubleDouble>>,
    /// Cluster position of each last-block voxel, if it belongs to the cluster.
    slot: Vec<Option<usize>>,
    activations: Vec<DoubleDouble>,
    centers: Vec<[f64; 3]>,
}

impl<'a> Frozen<'a> {
    fn new(
        det: &'a ReferenceDetector,
        fwd: &'a Forward,
        members: &[usize],
        mask: AttributeMask,
        lb: usize,
    ) -> Self {
        let d = det.feature_dim();
        let mut levels = vec![fwd.levels[lb]
            .features
            .iter()
            .map(|v| DoubleDouble::from_f64(*v))
            .collect::<Vec<_>>()];
        for l in lb + 1..NUM_BLOCKS {
            let level = &fwd.levels[l];
            let below = levels.last().expect("seeded above");
            let mut out = Vec::with_capacity(level.len() * d);
            for v in 0..level.len() {
                let kids: Vec<&[DoubleDouble]> = level.children[v]
                    .iter()
                    .map(|&c| &below[c * d..(c + 1) * d])
                    .collect();
                out.extend(Self::block_row(det, fwd, l, v, &kids));
            }
            levels.push(out);
        }
        let last = levels.last().expect("at least one level");
        let mut slot = vec![None; fwd.levels[NUM_BLOCKS - 1].len()];
        for (i, &v) in members.iter().enumerate() {
            slot[v] = Some(i);
        }
        let activations = members
            .iter()
            .map(|&v| Self::head(det, &last[v * d..(v + 1) * d]))
            .collect();
        Self {
            det,
            fwd,
            lb,
            mask,
            centers: det.member_centers(fwd, members),
            levels,
            slot,
            activations,
        }
    }

    fn block_row(
        det: &ReferenceDetector,
        fwd: &Forward,
        l: usize,
        v: usize,
        kids: &[&[DoubleDouble]],
    ) -> Vec<DoubleDouble> {
        let d = det.feature_dim();
        let eighth = DoubleDouble::from_f64(0.125);
        let pooled: Vec<DoubleDouble> = (0..d)
            .map(|k| kids.iter().fold(DoubleDouble::zero(), |acc, row| acc + row[k]) * eighth)
            .collect();
        let w = det.block_weights(l);
        let active = &fwd.levels[l].active[v * d..(v + 1) * d];
        (0..d)
            .map(|j| {
                if !active[j] {
                    return DoubleDouble::zero();
                }
                (0..d).fold(DoubleDouble::zero(), |acc, k| {
                    acc + DoubleDouble::from_f64(w[j * d + k]) * pooled[k]
                })
            })
            .collect()
    }

    fn head(det: &ReferenceDetector, row: &[DoubleDouble]) -> DoubleDouble {
        row.iter()
            .zip(det.head_weights())
            .fold(DoubleDouble::zero(), |acc, (f, u)| acc + *f * DoubleDouble::from_f64(*u))
    }

    fn reaches_cluster(&self, c: usize) -> bool {
        let mut pos = c;
        for l in self.lb..NUM_BLOCKS - 1 {
            pos = self.fwd.levels[l].parent[pos];
        }
        self.slot[pos].is_some()
    }

    /// Loss after adding `delta` to channel `k` of voxel `c` in the starting block.
    fn loss(&self, c: usize, k: usize, delta: f64) -> DoubleDouble {
        let d = self.det.feature_dim();
        let mut row: Vec<DoubleDouble> = self.levels[0][c * d..(c + 1) * d].to_vec();
        row[k] = row[k] + DoubleDouble::from_f64(delta);
        let mut pos = c;
        for l in self.lb + 1..NUM_BLOCKS {
            let parent = self.fwd.levels[l - 1].parent[pos];
            let below = &self.levels[l - 1 - self.lb];
            let kids: Vec<&[DoubleDouble]> = self.fwd.levels[l].children[parent]
                .iter()
                .map(|&child| {
                    if child == pos {
                        row.as_slice()
                    } else {
                        &below[child * d..(child + 1) * d]
                    }
                })
                .collect();
            row = Self::block_row(self.det, self.fwd, l, parent, &kids);
            pos = parent;
        }
        let mut activations = self.activations.clone();
        if let Some(i) = self.slot[pos] {
            activations[i] = Self::head(self.det, &row);
        }
        let m = self.det.moments(&activations, &self.centers);
        ReferenceDetector::moments_loss(&m, self.mask)
    }
}
