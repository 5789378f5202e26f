//! Spread a sparse voxel activation back onto points with the Gaussian kernel,
//! next to plain nearest-voxel lookup.

use ffam::voxel::{nearest_voxel_lookup, upsample_to_points, GridSpec, SparseVoxelMap, UpsampleConfig, VoxelCoord};
use ffam::{Point, PointCloud};

fn main() -> ffam::Result<()> {
    let grid = GridSpec::new(0.5, (0.0, 10.0), (0.0, 10.0), (0.0, 2.0))?;
    let map = SparseVoxelMap::new(
        grid,
        vec![VoxelCoord::new(4, 4, 1), VoxelCoord::new(8, 4, 1)],
        vec![1.0, 0.2],
    )?;
    // A line of points walking from the hot voxel to the cold one and past it.
    let cloud: PointCloud = (0..14)
        .map(|i| Point::new(1.8 + 0.25 * f64::from(i), 2.2, 0.7, 0.0))
        .collect();

    for (range, k) in [(1, 4), (2, 16), (3, 32)] {
        let s = upsample_to_points(&map, &cloud, &UpsampleConfig { range_threshold: range, k });
        let row: Vec<String> = s.scores.iter().map(|v| format!("{v:.2}")).collect();
        println!("range {range} k {k:>2}: {}", row.join(" "));
    }
    let nearest = nearest_voxel_lookup(&map, &cloud);
    let row: Vec<String> = nearest.scores.iter().map(|v| format!("{v:.2}")).collect();
    println!("nearest voxel:  {}", row.join(" "));
    Ok(())
}
