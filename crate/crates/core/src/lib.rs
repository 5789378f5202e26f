pub mod aggregate;
pub mod cli;
pub mod cloud;
pub mod config;
pub mod detection;
pub mod detector;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nmf;
pub mod scene;
pub mod selftest;
pub mod voxel;

pub use cloud::{Point, PointCloud, SaliencyMap};
pub use error::{Error, Result};
