//! Factorize a scene's block-3 features and show how concept weight
//! concentrates on the objects.

use ffam::detector::{Detector, ReferenceDetector, ReferenceDetectorConfig};
use ffam::geometry::point_in_box;
use ffam::nmf::{factorize_traced, global_concept_map, DenseMatrix, NmfConfig};
use ffam::scene::{synthetic_scene, SceneConfig};

fn main() -> ffam::Result<()> {
    let scene = synthetic_scene(3, &SceneConfig::default());
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let features = det.features(&scene.cloud, 3)?;
    let a = DenseMatrix::from_rows(features.payload())?;
    let cfg = NmfConfig {
        rank: 16,
        ..NmfConfig::default()
    };
    let (f, trace) = factorize_traced(&a, &cfg)?;
    println!(
        "A is {}x{}, rank {}, {} iterations, relative objective {:.4}",
        a.rows(),
        a.cols(),
        f.rank(),
        f.iterations_run,
        f.final_objective / a.squared_norm()
    );
    println!("objective: first {:.3e}, last {:.3e}", trace[0], trace[trace.len() - 1]);

    let v = global_concept_map(&f);
    let grid = features.grid();
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for (c, value) in features.coords().iter().zip(&v) {
        let p = grid.voxel_center(*c);
        if scene.ground_truth.iter().any(|g| point_in_box(p, &g.bbox)) {
            inside.push(*value);
        } else {
            outside.push(*value);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "mean concept weight: {:.4} on {} object voxels, {:.4} on {} others",
        mean(&inside),
        inside.len(),
        mean(&outside),
        outside.len()
    );
    Ok(())
}
