//! The detector contract the explanation pipeline consumes, a deterministic
//! reference detector with analytic feature gradients, and a replay adapter
//! for feature dumps exported from external detectors.

mod dump;
pub mod gradcheck;
mod reference;
mod real;

pub use dump::{load_dump, DumpDetector, FeatureDump, GradientRecord};
pub use gradcheck::{grad_check, grad_check_scene, GradCheckReport, FD_STEP, RELATIVE_FLOOR};
pub use reference::{ReferenceDetector, ReferenceDetectorConfig, NUM_BLOCKS};

use crate::cloud::PointCloud;
use crate::detection::{AttributeMask, Detection};
use crate::error::{Error, Result};
use crate::voxel::SparseVoxelMap;

/// Per-voxel channel vectors (`M × d`) of one backbone block.
pub type FeatureMap = SparseVoxelMap<Vec<f64>>;

/// `∂ℓ/∂F`, sharing the coordinate list of its [`FeatureMap`].
pub type GradientMap = SparseVoxelMap<Vec<f64>>;

/// Anything that can detect objects and expose one backbone block's sparse
/// features together with the gradient of a detection loss w.r.t. them.
pub trait Detector: Sync {
    fn detect(&self, cloud: &PointCloud) -> Result<Vec<Detection>>;

    fn features(&self, cloud: &PointCloud, block: u8) -> Result<FeatureMap>;

    /// Gradient of the L1 detection loss over the attributes in `mask`.
    /// Its coordinates equal those of `features(cloud, block)`, in the same order.
    fn gradient(
        &self,
        cloud: &PointCloud,
        detection: &Detection,
        mask: AttributeMask,
        block: u8,
    ) -> Result<GradientMap>;
}

pub(crate) fn check_block(block: u8) -> Result<()> {
    if (1..=NUM_BLOCKS as u8).contains(&block) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "block index {block} outside 1..={NUM_BLOCKS}"
        )))
    }
}
