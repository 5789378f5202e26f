//! Sparse voxel grids: point-to-voxel assignment, Manhattan neighbor queries
//! and Gaussian-kernel upsampling of voxel activations onto points.

use std::collections::{BTreeMap, HashMap};

use crate::cloud::{Point, PointCloud, SaliencyMap};
use crate::error::{Error, Result};

/// Axis-aligned grid of cubic voxels covering a box-shaped range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub voxel_size: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl GridSpec {
    pub fn new(
        voxel_size: f64,
        x_range: (f64, f64),
        y_range: (f64, f64),
        z_range: (f64, f64),
    ) -> Result<Self> {
        let grid = Self {
            voxel_size,
            x_range,
            y_range,
            z_range,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.voxel_size > 0.0
            && self.voxel_size.is_finite()
            && [self.x_range, self.y_range, self.z_range]
                .iter()
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid grid {self:?}")))
        }
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [self.x_range, self.y_range, self.z_range]
    }

    /// Number of voxels along each axis.
    pub fn extent(&self) -> [i32; 3] {
        self.ranges()
            .map(|(lo, hi)| ((hi - lo) / self.voxel_size).ceil() as i32)
    }

    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        [x, y, z]
            .iter()
            .zip(self.ranges())
            .all(|(v, (lo, hi))| lo <= *v && *v < hi)
    }

    /// Same range, voxels `stride` times larger.
    pub fn coarsened(&self, stride: u32) -> GridSpec {
        GridSpec {
            voxel_size: self.voxel_size * f64::from(stride),
            ..*self
        }
    }

    pub fn voxel_center(&self, c: VoxelCoord) -> [f64; 3] {
        let lo = self.ranges().map(|(lo, _)| lo);
        [
            lo[0] + (f64::from(c.ix) + 0.5) * self.voxel_size,
            lo[1] + (f64::from(c.iy) + 0.5) * self.voxel_size,
            lo[2] + (f64::from(c.iz) + 0.5) * self.voxel_size,
        ]
    }
}

/// Integer voxel index. Ordering is lexicographic on `(ix, iy, iz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelCoord {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelCoord {
    pub const fn new(ix: i32, iy: i32, iz: i32) -> Self {
        Self { ix, iy, iz }
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.ix + dx, self.iy + dy, self.iz + dz)
    }

    /// Index of the enclosing voxel on a grid whose cells are `stride` times larger.
    pub fn coarsened(self, stride: i32) -> Self {
        Self::new(
            self.ix.div_euclid(stride),
            self.iy.div_euclid(stride),
            self.iz.div_euclid(stride),
        )
    }
}

/// Occupied voxels with one payload each, plus a hash index over coordinates.
#[derive(Debug, Clone)]
pub struct SparseVoxelMap<T> {
    coords: Vec<VoxelCoord>,
    payload: Vec<T>,
    grid: GridSpec,
    index: HashMap<VoxelCoord, usize>,
}

impl<T: PartialEq> PartialEq for SparseVoxelMap<T> {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && self.payload == other.payload && self.grid == other.grid
    }
}

impl<T> SparseVoxelMap<T> {
    pub fn new(grid: GridSpec, coords: Vec<VoxelCoord>, payload: Vec<T>) -> Result<Self> {
        if coords.len() != payload.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates but {} payload entries",
                coords.len(),
                payload.len()
            )));
        }
        let mut index = HashMap::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            if index.insert(*c, i).is_some() {
                return Err(Error::ShapeMismatch(format!("duplicate voxel {c:?}")));
            }
        }
        Ok(Self {
            coords,
            payload,
            grid,
            index,
        })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self {
            coords: Vec::new(),
            payload: Vec::new(),
            grid,
            index: HashMap::new(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn payload(&self) -> &[T] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn position(&self, c: &VoxelCoord) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn get(&self, c: &VoxelCoord) -> Option<&T> {
        self.position(c).map(|i| &self.payload[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelCoord, &T)> {
        self.coords.iter().zip(&self.payload)
    }

    /// Same coordinates and grid with a new payload.
    pub fn with_payload<U>(&self, payload: Vec<U>) -> Result<SparseVoxelMap<U>> {
        if payload.len() != self.coords.len() {
            return Err(Error::LengthMismatch {
                expected: self.coords.len(),
                actual: payload.len(),
            });
        }
        Ok(SparseVoxelMap {
            coords: self.coords.clone(),
            payload,
            grid: self.grid,
            index: self.index.clone(),
        })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> SparseVoxelMap<U> {
        SparseVoxelMap {
            coords: self.coords.clone(),
            payload: self.payload.iter().map(f).collect(),
            grid: self.grid,
            index: self.index.clone(),
        }
    }
}

/// Neighbor-query and kernel settings for upsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpsampleConfig {
    /// Largest Manhattan distance, in voxels, a neighbor may have.
    pub range_threshold: u32,
    /// Maximum number of neighbors.
    pub k: usize,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        Self {
            range_threshold: 2,
            k: 16,
        }
    }
}

impl UpsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("upsampling k must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn voxelize_point(p: &Point, grid: &GridSpec) -> Result<VoxelCoord> {
    voxelize_xyz(p.x, p.y, p.z, grid).ok_or(Error::OutOfRange {
        x: p.x,
        y: p.y,
        z: p.z,
    })
}

pub(crate) fn voxelize_xyz(x: f64, y: f64, z: f64, grid: &GridSpec) -> Option<VoxelCoord> {
    if !grid.contains(x, y, z) {
        return None;
    }
    let extent = grid.extent();
    let cell = |v: f64, lo: f64, n: i32| (((v - lo) / grid.voxel_size).floor() as i32).min(n - 1);
    Some(VoxelCoord::new(
        cell(x, grid.x_range.0, extent[0]),
        cell(y, grid.y_range.0, extent[1]),
        cell(z, grid.z_range.0, extent[2]),
    ))
}

/// Batch voxel assignment for a whole cloud.
#[derive(Debug, Clone)]
pub struct VoxelAssignment {
    /// Occupied voxels in lexicographic order, each with its point indices in ascending order.
    pub voxels: SparseVoxelMap<Vec<usize>>,
    /// Voxel of every point, `None` for points outside the grid.
    pub per_point: Vec<Option<VoxelCoord>>,
}

impl VoxelAssignment {
    pub fn unassigned(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_point
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
    }
}

pub fn voxelize_cloud(cloud: &PointCloud, grid: &GridSpec) -> VoxelAssignment {
    let mut buckets: BTreeMap<VoxelCoord, Vec<usize>> = BTreeMap::new();
    let per_point: Vec<Option<VoxelCoord>> = cloud
        .iter()
        .map(|p| voxelize_xyz(p.x, p.y, p.z, grid))
        .collect();
    for (i, c) in per_point.iter().enumerate() {
        if let Some(c) = c {
            buckets.entry(*c).or_default().push(i);
        }
    }
    let (coords, lists): (Vec<_>, Vec<_>) = buckets.into_iter().unzip();
    let voxels = SparseVoxelMap::new(*grid, coords, lists).expect("BTreeMap keys are unique");
    VoxelAssignment { voxels, per_point }
}

pub fn manhattan(a: VoxelCoord, b: VoxelCoord) -> i64 {
    (i64::from(a.ix) - i64::from(b.ix)).abs()
        + (i64::from(a.iy) - i64::from(b.iy)).abs()
        + (i64::from(a.iz) - i64::from(b.iz)).abs()
}

/// Offsets within Manhattan `radius`, sorted by distance then lexicographically.
pub fn manhattan_offsets(radius: u32) -> Vec<(VoxelCoord, u32)> {
    let r = radius as i32;
    let mut out = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                let d = (dx.abs() + dy.abs() + dz.abs()) as u32;
                if d <= radius {
                    out.push((VoxelCoord::new(dx, dy, dz), d));
                }
            }
        }
    }
    out.sort_by_key(|(c, d)| (*d, *c));
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a, T> {
    pub coord: VoxelCoord,
    pub payload: &'a T,
    pub distance: u32,
}

/// Occupied voxels within `cfg.range_threshold` of `center`, nearest first,
/// ties broken lexicographically, truncated to `cfg.k`.
pub fn neighbor_query<'a, T>(
    center: VoxelCoord,
    map: &'a SparseVoxelMap<T>,
    cfg: &UpsampleConfig,
) -> Vec<Neighbor<'a, T>> {
    query_with_offsets(center, map, &manhattan_offsets(cfg.range_threshold), cfg.k)
}

fn query_with_offsets<'a, T>(
    center: VoxelCoord,
    map: &'a SparseVoxelMap<T>,
    offsets: &[(VoxelCoord, u32)],
    k: usize,
) -> Vec<Neighbor<'a, T>> {
    let mut out = Vec::new();
    for (off, distance) in offsets {
        if out.len() == k {
            break;
        }
        let coord = center.offset(off.ix, off.iy, off.iz);
        if let Some(payload) = map.get(&coord) {
            out.push(Neighbor {
                coord,
                payload,
                distance: *distance,
            });
        }
    }
    out
}

/// Unnormalized kernel `exp(-d²/2)`.
pub fn gaussian_kernel(distance: u32) -> f64 {
    let d = f64::from(distance);
    (-0.5 * d * d).exp()
}

/// Kernel weights of a neighbor set, normalized to sum to one.
pub fn kernel_weights<T>(neighbors: &[Neighbor<'_, T>]) -> Vec<f64> {
    let raw: Vec<f64> = neighbors.iter().map(|n| gaussian_kernel(n.distance)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Kernel-weighted mean of neighbor activations; 0 when there are no neighbors.
pub fn interpolate(neighbors: &[Neighbor<'_, f64>]) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    let weights = kernel_weights(neighbors);
    let lo = neighbors.iter().map(|n| *n.payload).fold(f64::INFINITY, f64::min);
    let hi = neighbors.iter().map(|n| *n.payload).fold(f64::NEG_INFINITY, f64::max);
    // Accumulate offsets from the smallest value so that equal values and
    // singleton sets reproduce the voxel value bit-exactly.
    let spread: f64 = weights
        .iter()
        .zip(neighbors)
        .map(|(w, n)| w * (n.payload - lo))
        .sum();
    (lo + spread).min(hi)
}

/// Gaussian-kernel voxel upsampling of a scalar activation map onto points.
pub fn upsample_to_points(
    activation: &SparseVoxelMap<f64>,
    cloud: &PointCloud,
    cfg: &UpsampleConfig,
) -> SaliencyMap {
    let offsets = manhattan_offsets(cfg.range_threshold);
    let grid = activation.grid();
    SaliencyMap::new(
        cloud
            .iter()
            .map(|p| match voxelize_xyz(p.x, p.y, p.z, grid) {
                Some(c) => interpolate(&query_with_offsets(c, activation, &offsets, cfg.k)),
                None => 0.0,
            })
            .collect(),
    )
}

/// Each point takes the activation of its own voxel (0 when unoccupied or out of range).
pub fn nearest_voxel_lookup(activation: &SparseVoxelMap<f64>, cloud: &PointCloud) -> SaliencyMap {
    let grid = activation.grid();
    SaliencyMap::new(
        cloud
            .iter()
            .map(|p| {
                voxelize_xyz(p.x, p.y, p.z, grid)
                    .and_then(|c| activation.get(&c).copied())
                    .unwrap_or(0.0)
            })
            .collect(),
    )
}
