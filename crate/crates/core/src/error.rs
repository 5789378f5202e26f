use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entry ({row}, {col}) is negative ({value}); set clamp_negatives to zero it")]
    NegativeInput { row: usize, col: usize, value: f64 },
    #[error("rank {rank} exceeds min(rows, cols) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point ({x}, {y}, {z}) lies outside the voxel grid")]
    OutOfRange { x: f64, y: f64, z: f64 },
    #[error("attribute mask selects no attribute")]
    EmptyMask,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("detector failure: {0}")]
    DetectorFailure(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("detection {0} not found")]
    DetectionNotFound(String),
    #[error("malformed feature dump: {0}")]
    MalformedDump(String),
    #[error("no stored gradient for detection {detection} and attribute mask {mask:#06x}")]
    MissingGradient { detection: usize, mask: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate box: every size component must be positive")]
    DegenerateBox,
    #[error("no points inside the evaluation region")]
    NoRegionPoints,
    #[error("ground-truth box contains no points")]
    EmptyGroundTruth,
    #[error("saliency map has zero total energy")]
    ZeroEnergy,
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("{0} self-check suite(s) failed")]
    SelfTestFailed(usize),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the file system rather than by data or configuration.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
