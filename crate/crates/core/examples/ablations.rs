//! Visual explanation accuracy of the full method against its ablations on
//! the same detections. The factorization is shared across ablations.

use ffam::detection::AttributeMask;
use ffam::detector::{Detector, ReferenceDetector, ReferenceDetectorConfig};
use ffam::explain::{Ablation, PipelineConfig, SceneExplainer};
use ffam::metrics::{vea, well_detected, EvalThresholds};
use ffam::scene::{synthetic_scene, SceneConfig};

fn main() -> ffam::Result<()> {
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let ablations = [Ablation::Full, Ablation::NoFf, Ablation::NoVu, Ablation::GradientOnly];
    let mut totals = [0.0; 4];
    let mut objects = 0;
    for seed in 0..4 {
        let scene = synthetic_scene(seed, &SceneConfig::default());
        let predictions = det.detect(&scene.cloud)?;
        let matched = well_detected(&predictions, &scene.ground_truth, &EvalThresholds::default());
        if matched.is_empty() {
            continue;
        }
        let full = SceneExplainer::new(&det, &scene.cloud, &PipelineConfig::default())?;
        for m in &matched {
            let d = predictions[m.prediction];
            let gt = &scene.ground_truth[m.ground_truth].bbox;
            for (total, ab) in totals.iter_mut().zip(ablations) {
                let s = full.with_ablation(ab)?.explain(&d, AttributeMask::ALL)?;
                *total += vea(&s, &scene.cloud, gt)?;
            }
            objects += 1;
        }
    }
    println!("{objects} well-detected objects");
    for (total, ab) in totals.iter().zip(ablations) {
        println!("{:<14} mean vea {:.3}", ab.name(), total / f64::from(objects.max(1)));
    }
    Ok(())
}
