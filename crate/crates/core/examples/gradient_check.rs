//! Compare the reference detector's analytic gradients with central
//! differences, block by block.

use ffam::detection::AttributeMask;
use ffam::detector::{grad_check_scene, ReferenceDetector, ReferenceDetectorConfig};
use ffam::scene::{synthetic_scene, SceneConfig};

fn main() -> ffam::Result<()> {
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    for seed in 0..3 {
        let scene = synthetic_scene(seed, &SceneConfig::gradient_check());
        for block in 1..=4 {
            let r = grad_check_scene(&det, &scene.cloud, AttributeMask::ALL, block)?;
            println!(
                "scene {seed} block {block}: {} detections, {:>7} entries, max relative error {:.2e}",
                r.detections, r.entries, r.max_relative_error
            );
        }
    }
    Ok(())
}
