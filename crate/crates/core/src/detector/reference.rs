//! Deterministic stand-in for a voxel backbone plus detection head.
//!
//! Points are voxelized on a base grid and summarized per voxel (point count,
//! mean in-voxel offset, mean intensity). Four blocks follow, each a seeded
//! linear map with ReLU; every block after the first first pools 2×2×2
//! children into their parent (sum / 8, so partially occupied parents carry
//! proportionally less signal). The head scores block-4 voxels with a
//! non-negative vector, keeps those above a threshold, groups them by
//! 26-connectivity and turns every group into a yaw-free box from
//! activation-weighted moments.
//!
//! Gradients are exact for the piecewise-smooth network with its discrete
//! structure held fixed: voxel assignment, ReLU gating, cluster membership
//! and class choice.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::real::Real;
use super::{check_block, Detector, FeatureMap, GradientMap};
use crate::cloud::PointCloud;
use crate::detection::{Attribute, AttributeMask, ClassLabel, Detection};
use crate::error::{Error, Result};
use crate::geometry::iou_3d;
use crate::voxel::{voxelize_cloud, GridSpec, SparseVoxelMap, VoxelCoord};

pub const NUM_BLOCKS: usize = 4;

/// Mean (length, width, height) per class; the head picks the closest in log-size.
const CLASS_PROTOTYPES: [(ClassLabel, [f64; 3]); 3] = [
    (ClassLabel::Car, [3.9, 1.6, 1.56]),
    (ClassLabel::Pedestrian, [0.8, 0.6, 1.73]),
    (ClassLabel::Cyclist, [1.76, 0.6, 1.73]),
];

const HEAD_GAIN: f64 = 128.0;

/// A stored detection must overlap a recomputed one at least this much to be
/// considered the same object.
const MATCH_IOU: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDetectorConfig {
    pub seed: u64,
    /// Base voxel grid; block `b` uses voxels `2^(b-1)` times larger.
    pub grid: GridSpec,
    pub feature_dim: usize,
    /// Minimum head activation for a block-4 voxel to join a cluster.
    pub activation_threshold: f64,
    /// Box extent per axis is `size_scale · σ`, σ the weighted standard deviation.
    pub size_scale: f64,
    /// Confidence is `logistic(Σ activations − score_offset)`.
    pub score_offset: f64,
}

impl Default for ReferenceDetectorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSpec {
                voxel_size: 0.05,
                x_range: (0.0, 25.6),
                y_range: (-12.8, 12.8),
                z_range: (-3.2, 3.2),
            },
            feature_dim: 32,
            activation_threshold: 0.2,
            size_scale: 12f64.sqrt(),
            score_offset: 2.0,
        }
    }
}

impl ReferenceDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.feature_dim < 4 {
            return Err(Error::InvalidConfig("feature_dim must be at least 4".into()));
        }
        if !(self.activation_threshold >= 0.0) || !(self.size_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "activation_threshold must be >= 0 and size_scale > 0".into(),
            ));
        }
        if !self.score_offset.is_finite() {
            return Err(Error::InvalidConfig("score_offset must be finite".into()));
        }
        Ok(())
    }
}

/// One block's sparse output.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub grid: GridSpec,
    pub coords: Vec<VoxelCoord>,
    pub index: HashMap<VoxelCoord, usize>,
    /// `M × d`, post-ReLU.
    pub features: Vec<f64>,
    /// ReLU gate per entry (`pre-activation > 0`).
    pub active: Vec<bool>,
    /// Indices into the previous level (empty for block 1).
    pub children: Vec<Vec<usize>>,
    /// Index into the next level (unused for the last block).
    pub parent: Vec<usize>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub levels: Vec<Level>,
    /// Head activation of every last-block voxel.
    pub activations: Vec<f64>,
}

/// Box moments of one cluster, generic so the oracle can evaluate them in extended precision.
pub(crate) struct BoxMoments<R> {
    pub center: [R; 3],
    pub size: [R; 3],
    pub score: R,
}

#[derive(Debug, Clone)]
pub struct ReferenceDetector {
    cfg: ReferenceDetectorConfig,
    /// Per block, `d × d` row-major (output-major).
    blocks: Vec<Vec<f64>>,
    head: Vec<f64>,
}

impl ReferenceDetector {
    pub fn new(cfg: ReferenceDetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // Mean 1/d per weight keeps feature magnitude roughly constant across blocks.
        let blocks = (0..NUM_BLOCKS)
            .map(|_| {
                (0..d * d)
                    .map(|_| (rng.gen::<f64>() - 0.25) * 4.0 / d as f64)
                    .collect()
            })
            .collect();
        // A fully occupied last-block voxel scores close to 1.
        let head = (0..d).map(|_| rng.gen::<f64>() * HEAD_GAIN / d as f64).collect();
        Ok(Self { cfg, blocks, head })
    }

    pub fn config(&self) -> &ReferenceDetectorConfig {
        &self.cfg
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    pub(crate) fn block_weights(&self, block_level: usize) -> &[f64] {
        &self.blocks[block_level]
    }

    pub(crate) fn head_weights(&self) -> &[f64] {
        &self.head
    }

    /// Head score of every last-block voxel, before thresholding.
    pub fn head_activations(&self, cloud: &PointCloud) -> Result<SparseVoxelMap<f64>> {
        let fwd = self.forward(cloud)?;
        let last = fwd.levels.last().expect("four blocks");
        SparseVoxelMap::new(last.grid, last.coords.clone(), fwd.activations)
    }

    /// Runs the backbone and head scoring.
    pub(crate) fn forward(&self, cloud: &PointCloud) -> Result<Forward> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let d = self.cfg.feature_dim;
        let grid = self.cfg.grid;
        let assign = voxelize_cloud(cloud, &grid);

        let mut descriptors = Vec::with_capacity(assign.voxels.len() * d);
        for (coord, members) in assign.voxels.iter() {
            let center = grid.voxel_center(*coord);
            let n = members.len() as f64;
            let mut desc = [n, 0.0, 0.0, 0.0, 0.0];
            for &i in members {
                let p = &cloud.points[i];
                desc[1] += (p.x - center[0]) / grid.voxel_size;
                desc[2] += (p.y - center[1]) / grid.voxel_size;
                desc[3] += (p.z - center[2]) / grid.voxel_size;
                desc[4] += p.intensity;
            }
            for v in &mut desc[1..] {
                *v /= n;
            }
            let mut row = vec![0.0; d];
            for (r, v) in row.iter_mut().zip(desc) {
                *r = v;
            }
            descriptors.extend(row);
        }

        let coords = assign.voxels.coords().to_vec();
        let (features, active) = self.apply_block(0, &descriptors);
        let mut levels = vec![Level {
            grid,
            index: index_of(&coords),
            coords,
            features,
            active,
            children: Vec::new(),
            parent: Vec::new(),
        }];

        for b in 1..NUM_BLOCKS {
            let prev = levels.last_mut().expect("first block exists");
            let mut groups: BTreeMap<VoxelCoord, Vec<usize>> = BTreeMap::new();
            for (i, c) in prev.coords.iter().enumerate() {
                groups.entry(c.coarsened(2)).or_default().push(i);
            }
            let (coords, children): (Vec<_>, Vec<_>) = groups.into_iter().unzip();
            prev.parent = vec![0; prev.len()];
            let mut pooled = vec![0.0; coords.len() * d];
            for (v, kids) in children.iter().enumerate() {
                let row = &mut pooled[v * d..(v + 1) * d];
                for &c in kids {
                    prev.parent[c] = v;
                    for (r, f) in row.iter_mut().zip(&prev.features[c * d..(c + 1) * d]) {
                        *r += f;
                    }
                }
                for r in row.iter_mut() {
                    *r *= 0.125;
                }
            }
            let grid = prev.grid.coarsened(2);
            let (features, active) = self.apply_block(b, &pooled);
            levels.push(Level {
                grid,
                index: index_of(&coords),
                coords,
                features,
                active,
                children,
                parent: Vec::new(),
            });
        }

        let last = levels.last().expect("four blocks");
        let activations = (0..last.len())
            .map(|v| dot(&self.head, &last.features[v * d..(v + 1) * d]))
            .collect();
        Ok(Forward {
            levels,
            activations,
        })
    }

    fn apply_block(&self, b: usize, input: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let d = self.cfg.feature_dim;
        let w = &self.blocks[b];
        let mut out = Vec::with_capacity(input.len());
        let mut active = Vec::with_capacity(input.len());
        for row in input.chunks_exact(d) {
            for j in 0..d {
                let pre = dot(&w[j * d..(j + 1) * d], row);
                active.push(pre > 0.0);
                out.push(pre.max(0.0));
            }
        }
        (out, active)
    }

    /// Connected groups of above-threshold last-block voxels, ordered by their
    /// smallest coordinate; members ascending.
    pub(crate) fn clusters(&self, fwd: &Forward) -> Vec<Vec<usize>> {
        let last = fwd.levels.last().expect("four blocks");
        let hot: Vec<bool> = fwd
            .activations
            .iter()
            .map(|a| *a > self.cfg.activation_threshold)
            .collect();
        let mut seen = vec![false; last.len()];
        let mut out = Vec::new();
        for start in 0..last.len() {
            if !hot[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut members = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                let c = last.coords[v];
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(&n) = last.index.get(&c.offset(dx, dy, dz)) {
                                if hot[n] && !seen[n] {
                                    seen[n] = true;
                                    members.push(n);
                                    queue.push_back(n);
                                }
                            }
                        }
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub(crate) fn member_centers(&self, fwd: &Forward, members: &[usize]) -> Vec<[f64; 3]> {
        let last = fwd.levels.last().expect("four blocks");
        members
            .iter()
            .map(|&v| last.grid.voxel_center(last.coords[v]))
            .collect()
    }

    fn last_cell(&self) -> f64 {
        self.cfg.grid.voxel_size * f64::from(1u32 << (NUM_BLOCKS - 1))
    }

    /// Activation-weighted box moments. The within-cell variance `c²/12` is
    /// added so that a uniformly filled box of extent `L` yields `σ = L/√12`.
    pub(crate) fn moments<R: Real>(&self, weights: &[R], centers: &[[f64; 3]]) -> BoxMoments<R> {
        let total = weights.iter().fold(R::zero(), |acc, w| acc + *w);
        let cell = self.last_cell();
        let within = R::from_f64(cell * cell / 12.0);
        let kappa = R::from_f64(self.cfg.size_scale);
        let mut center = [R::zero(); 3];
        let mut size = [R::zero(); 3];
        for axis in 0..3 {
            let mean = weights
                .iter()
                .zip(centers)
                .fold(R::zero(), |acc, (w, c)| acc + *w * R::from_f64(c[axis]))
                / total;
            let var = weights.iter().zip(centers).fold(R::zero(), |acc, (w, c)| {
                let dev = R::from_f64(c[axis]) - mean;
                acc + *w * dev * dev
            }) / total;
            center[axis] = mean;
            size[axis] = kappa * (var + within).sqrt();
        }
        let logit = total - R::from_f64(self.cfg.score_offset);
        let score = R::from_f64(1.0) / (R::from_f64(1.0) + (-logit).exp());
        BoxMoments {
            center,
            size,
            score,
        }
    }

    /// L1 distance of the selected attributes from an all-zero baseline.
    pub(crate) fn moments_loss<R: Real>(m: &BoxMoments<R>, mask: AttributeMask) -> R {
        let mut loss = R::zero();
        for attr in mask.attributes() {
            let v = match attr {
                Attribute::X => m.center[0],
                Attribute::Y => m.center[1],
                Attribute::Z => m.center[2],
                Attribute::Length => m.size[0],
                Attribute::Width => m.size[1],
                Attribute::Height => m.size[2],
                // Boxes are axis-aligned: yaw is identically zero.
                Attribute::Yaw => R::zero(),
                Attribute::Score => m.score,
            };
            loss = loss + v.abs();
        }
        loss
    }

    fn classify(size: [f64; 3]) -> ClassLabel {
        let (long, short) = if size[0] >= size[1] {
            (size[0], size[1])
        } else {
            (size[1], size[0])
        };
        let dims = [long, short, size[2]];
        let mut best = (ClassLabel::Car, f64::INFINITY);
        for (class, proto) in CLASS_PROTOTYPES {
            let dist: f64 = dims
                .iter()
                .zip(proto)
                .map(|(s, p)| (s / p).ln().powi(2))
                .sum();
            if dist < best.1 {
                best = (class, dist);
            }
        }
        best.0
    }

    pub(crate) fn cluster_detection(&self, fwd: &Forward, members: &[usize]) -> Detection {
        let weights: Vec<f64> = members.iter().map(|&v| fwd.activations[v]).collect();
        let centers = self.member_centers(fwd, members);
        let m = self.moments(&weights, &centers);
        Detection {
            center: m.center,
            size: m.size,
            yaw: 0.0,
            score: m.score,
            class: Self::classify(m.size),
        }
    }

    /// Cluster whose box matches `d`.
    pub(crate) fn find_cluster(
        &self,
        fwd: &Forward,
        clusters: &[Vec<usize>],
        d: &Detection,
    ) -> Result<usize> {
        let target = d.bbox();
        clusters
            .iter()
            .enumerate()
            .map(|(i, m)| (i, self.cluster_detection(fwd, m)))
            .filter(|(_, det)| det.class == d.class)
            .map(|(i, det)| (i, iou_3d(&det.bbox(), &target)))
            .filter(|(_, iou)| *iou >= MATCH_IOU)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .ok_or_else(|| {
                Error::DetectionNotFound(format!(
                    "{} at ({:.3}, {:.3}, {:.3})",
                    d.class, d.center[0], d.center[1], d.center[2]
                ))
            })
    }

    /// `∂ℓ/∂a` for each cluster member's head activation.
    fn activation_gradient(
        &self,
        weights: &[f64],
        centers: &[[f64; 3]],
        mask: AttributeMask,
    ) -> Vec<f64> {
        let total: f64 = weights.iter().sum();
        let cell = self.last_cell();
        let mut grad = vec![0.0; weights.len()];
        for axis in 0..3 {
            let mean = weights
                .iter()
                .zip(centers)
                .map(|(w, c)| w * c[axis])
                .sum::<f64>()
                / total;
            let var = weights
                .iter()
                .zip(centers)
                .map(|(w, c)| w * (c[axis] - mean).powi(2))
                .sum::<f64>()
                / total;
            let sd = (var + cell * cell / 12.0).sqrt();
            let center_attr = [Attribute::X, Attribute::Y, Attribute::Z][axis];
            let size_attr = [Attribute::Length, Attribute::Width, Attribute::Height][axis];
            for (g, c) in grad.iter_mut().zip(centers) {
                let dev = c[axis] - mean;
                if mask.contains(center_attr) {
                    *g += signum(mean) * dev / total;
                }
                if mask.contains(size_attr) {
                    *g += self.cfg.size_scale / (2.0 * sd) * (dev * dev - var) / total;
                }
            }
        }
        if mask.contains(Attribute::Score) {
            let logit = total - self.cfg.score_offset;
            let s = 1.0 / (1.0 + (-logit).exp());
            for g in &mut grad {
                *g += s * (1.0 - s);
            }
        }
        grad
    }

    fn level_map(&self, level: &Level, values: Vec<f64>) -> FeatureMap {
        let d = self.cfg.feature_dim;
        let rows = values.chunks_exact(d).map(<[f64]>::to_vec).collect();
        SparseVoxelMap::new(level.grid, level.coords.clone(), rows).expect("level coordinates are unique")
    }

    /// Back-propagates a last-block gradient down to `block`.
    pub(crate) fn backpropagate(&self, fwd: &Forward, last_grad: Vec<f64>, block: u8) -> Vec<f64> {
        let d = self.cfg.feature_dim;
        let mut grad = last_grad;
        for lvl in (block as usize..NUM_BLOCKS).rev() {
            let level = &fwd.levels[lvl];
            let w = &self.blocks[lvl];
            let mut below = vec![0.0; fwd.levels[lvl - 1].len() * d];
            let mut gated = vec![0.0; d];
            for v in 0..level.len() {
                let g = &grad[v * d..(v + 1) * d];
                if g.iter().all(|x| *x == 0.0) {
                    continue;
                }
                for (j, gate) in gated.iter_mut().enumerate() {
                    *gate = if level.active[v * d + j] { g[j] } else { 0.0 };
                }
                // Wᵀ·gated, scaled by the 1/8 pooling factor.
                let mut to_pooled = vec![0.0; d];
                for (j, gj) in gated.iter().enumerate() {
                    if *gj == 0.0 {
                        continue;
                    }
                    for (t, wjk) in to_pooled.iter_mut().zip(&w[j * d..(j + 1) * d]) {
                        *t += wjk * gj;
                    }
                }
                for t in &mut to_pooled {
                    *t *= 0.125;
                }
                for &c in &level.children[v] {
                    below[c * d..(c + 1) * d].copy_from_slice(&to_pooled);
                }
            }
            grad = below;
        }
        grad
    }

    pub(crate) fn gradient_from_forward(
        &self,
        fwd: &Forward,
        d: &Detection,
        mask: AttributeMask,
        block: u8,
    ) -> Result<Vec<f64>> {
        check_block(block)?;
        let clusters = self.clusters(fwd);
        let members = &clusters[self.find_cluster(fwd, &clusters, d)?];
        let weights: Vec<f64> = members.iter().map(|&v| fwd.activations[v]).collect();
        let centers = self.member_centers(fwd, members);
        let da = self.activation_gradient(&weights, &centers, mask);

        let dim = self.cfg.feature_dim;
        let last = fwd.levels.last().expect("four blocks");
        let mut grad = vec![0.0; last.len() * dim];
        for (&v, g) in members.iter().zip(&da) {
            for (out, u) in grad[v * dim..(v + 1) * dim].iter_mut().zip(&self.head) {
                *out = g * u;
            }
        }
        Ok(self.backpropagate(fwd, grad, block))
    }
}

impl Detector for ReferenceDetector {
    fn detect(&self, cloud: &PointCloud) -> Result<Vec<Detection>> {
        let fwd = self.forward(cloud)?;
        Ok(self
            .clusters(&fwd)
            .iter()
            .map(|m| self.cluster_detection(&fwd, m))
            .collect())
    }

    fn features(&self, cloud: &PointCloud, block: u8) -> Result<FeatureMap> {
        check_block(block)?;
        let fwd = self.forward(cloud)?;
        let level = &fwd.levels[block as usize - 1];
        Ok(self.level_map(level, level.features.clone()))
    }

    fn gradient(
        &self,
        cloud: &PointCloud,
        detection: &Detection,
        mask: AttributeMask,
        block: u8,
    ) -> Result<GradientMap> {
        let fwd = self.forward(cloud)?;
        let grad = self.gradient_from_forward(&fwd, detection, mask, block)?;
        Ok(self.level_map(&fwd.levels[block as usize - 1], grad))
    }
}

fn index_of(coords: &[VoxelCoord]) -> HashMap<VoxelCoord, usize> {
    coords.iter().enumerate().map(|(i, c)| (*c, i)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn signum(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use rand::Rng;

    fn detector() -> ReferenceDetector {
        ReferenceDetector::new(ReferenceDetectorConfig::default()).unwrap()
    }

    fn blob(rng: &mut ChaCha8Rng, lo: [f64; 3], hi: [f64; 3], n: usize) -> Vec<Point> {
        (0..n)
            .map(|_| {
                Point::new(
                    rng.gen_range(lo[0]..hi[0]),
                    rng.gen_range(lo[1]..hi[1]),
                    rng.gen_range(lo[2]..hi[2]),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let det = detector();
        assert!(matches!(det.detect(&PointCloud::default()), Err(Error::EmptyCloud)));
        assert!(matches!(
            det.features(&PointCloud::default(), 3),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn features_are_non_negative_and_pooling_never_grows() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = PointCloud::new(blob(&mut rng, [5.0, -1.0, -1.0], [9.0, 1.0, 0.5], 4000));
        let mut prev = usize::MAX;
        for b in 1..=4 {
            let f = det.features(&cloud, b).unwrap();
            assert!(f.payload().iter().flatten().all(|v| *v >= 0.0));
            assert!(f.len() <= prev);
            assert_eq!(
                f.grid().voxel_size,
                det.config().grid.voxel_size * f64::from(1u32 << (b - 1))
            );
            prev = f.len();
        }
        assert!(det.features(&cloud, 0).is_err());
        assert!(det.features(&cloud, 5).is_err());
    }

    #[test]
    fn single_point_feature_is_rectified_linear_map() {
        let det = detector();
        let p = Point::new(1.23, 0.47, 0.11, 0.0);
        let f = det.features(&PointCloud::new(vec![p]), 1).unwrap();
        assert_eq!(f.len(), 1);
        let grid = det.config().grid;
        let c = grid.voxel_center(f.coords()[0]);
        let d = det.feature_dim();
        let mut desc = vec![0.0; d];
        desc[0] = 1.0;
        desc[1] = (p.x - c[0]) / grid.voxel_size;
        desc[2] = (p.y - c[1]) / grid.voxel_size;
        desc[3] = (p.z - c[2]) / grid.voxel_size;
        let w = det.block_weights(0);
        for (j, v) in f.payload()[0].iter().enumerate() {
            let pre: f64 = (0..d).map(|k| w[j * d + k] * desc[k]).sum();
            assert_eq!(*v, pre.max(0.0));
        }
    }

    #[test]
    fn one_dense_cluster_gives_one_detection() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = blob(&mut rng, [10.0, 2.0, -1.0], [12.0, 3.0, 0.0], 4000);
        let centroid = pts.iter().fold([0.0; 3], |acc, p| {
            [acc[0] + p.x, acc[1] + p.y, acc[2] + p.z]
        });
        let n = pts.len() as f64;
        let cloud = PointCloud::new(pts);
        let dets = det.detect(&cloud).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        let dist: f64 = (0..3)
            .map(|i| (dets[0].center[i] - centroid[i] / n).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 0.5, "{dist}");
        assert_eq!(dets[0].yaw, 0.0);
        assert!(dets[0].score > 0.0 && dets[0].score < 1.0);
    }

    #[test]
    fn sparse_noise_is_not_detected() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = PointCloud::new(blob(&mut rng, [0.0, -12.8, -3.2], [25.6, 12.8, 3.2], 500));
        let fwd = det.forward(&cloud).unwrap();
        let max = fwd.activations.iter().copied().fold(0.0, f64::max);
        assert!(max < det.config().activation_threshold, "{max}");
        assert!(det.detect(&cloud).unwrap().is_empty());
    }

    #[test]
    fn separated_clusters_are_separate_detections() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = blob(&mut rng, [3.0, -8.0, -1.0], [5.0, -7.0, 0.0], 4000);
        pts.extend(blob(&mut rng, [16.0, 5.0, -1.0], [18.0, 6.0, 0.0], 4000));
        let dets = det.detect(&PointCloud::new(pts)).unwrap();
        assert_eq!(dets.len(), 2);
        assert!(dets[0].center[0] < dets[1].center[0]);
    }

    #[test]
    fn score_only_gradient_lives_on_the_cluster() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts = blob(&mut rng, [10.0, 2.0, -1.0], [12.0, 3.0, 0.0], 4000);
        pts.extend(blob(&mut rng, [0.0, -12.8, -3.2], [25.6, 12.8, 3.2], 300));
        let cloud = PointCloud::new(pts);
        let d = det.detect(&cloud).unwrap()[0];
        let g = det
            .gradient(&cloud, &d, AttributeMask::only(Attribute::Score), 4)
            .unwrap();
        let f = det.features(&cloud, 4).unwrap();
        assert_eq!(g.coords(), f.coords());
        let fwd = det.forward(&cloud).unwrap();
        let cluster = &det.clusters(&fwd)[0];
        for (i, row) in g.payload().iter().enumerate() {
            let nonzero = row.iter().any(|v| *v != 0.0);
            if !cluster.contains(&i) {
                assert!(!nonzero, "gradient leaked to voxel {i}");
            }
        }
    }

    #[test]
    fn unknown_detection_is_rejected() {
        let det = detector();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = PointCloud::new(blob(&mut rng, [10.0, 2.0, -1.0], [12.0, 3.0, 0.0], 4000));
        let mut d = det.detect(&cloud).unwrap()[0];
        d.center[0] += 3.0;
        assert!(matches!(
            det.gradient(&cloud, &d, AttributeMask::ALL, 3),
            Err(Error::DetectionNotFound(_))
        ));
    }

    #[test]
    fn classifier_picks_nearest_prototype() {
        assert_eq!(ReferenceDetector::classify([4.0, 1.7, 1.5]), ClassLabel::Car);
        assert_eq!(ReferenceDetector::classify([1.7, 4.0, 1.5]), ClassLabel::Car);
        assert_eq!(ReferenceDetector::classify([0.7, 0.6, 1.8]), ClassLabel::Pedestrian);
        assert_eq!(ReferenceDetector::classify([1.8, 0.6, 1.7]), ClassLabel::Cyclist);
    }
}
