//! Record a detector's features and gradients to a dump file, reload it and
//! explain from the dump alone.

use ffam::detection::AttributeMask;
use ffam::detector::{load_dump, FeatureDump, ReferenceDetector, ReferenceDetectorConfig};
use ffam::explain::{ffam_explain, PipelineConfig};
use ffam::scene::{synthetic_scene, SceneConfig};

fn main() -> ffam::Result<()> {
    let scene = synthetic_scene(11, &SceneConfig::default());
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let pipeline = PipelineConfig::default();

    let dump = FeatureDump::capture(&det, &scene.cloud, pipeline.block_index, &[AttributeMask::ALL])?;
    let path = std::env::temp_dir().join(format!("{}.ffdp", scene.scene_id));
    dump.save(&path)?;
    println!(
        "wrote {}: {} voxels x {} channels, {} detections",
        path.display(),
        dump.coords.len(),
        dump.feature_dim,
        dump.detections.len()
    );

    let replay = load_dump(&path)?;
    for d in &dump.detections {
        let live = ffam_explain(&det, &scene.cloud, d, AttributeMask::ALL, &pipeline)?;
        let replayed = ffam_explain(&replay, &scene.cloud, d, AttributeMask::ALL, &pipeline)?;
        let drift = live
            .scores
            .iter()
            .zip(&replayed.scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{:?} at ({:.1}, {:.1}): max saliency drift {drift:.1e}", d.class, d.center[0], d.center[1]);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
