//! Average saliency of true and false positives in each box's canonical frame,
//! then compare the two sets.

use ffam::aggregate::{mode_report, tp_fp_split, ExplainedObject};
use ffam::detection::AttributeMask;
use ffam::detector::{Detector, ReferenceDetector, ReferenceDetectorConfig};
use ffam::explain::{PipelineConfig, SceneExplainer};
use ffam::geometry::{canonicalize, point_in_box};
use ffam::metrics::EvalThresholds;
use ffam::scene::{synthetic_dataset, SceneConfig};

fn main() -> ffam::Result<()> {
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let mut objects = Vec::new();
    for scene in synthetic_dataset(500, 4, &SceneConfig::default()) {
        let predictions = det.detect(&scene.cloud)?;
        if predictions.is_empty() {
            continue;
        }
        let (tp, _) = tp_fp_split(&predictions, &scene.ground_truth, &EvalThresholds::default());
        let explainer = SceneExplainer::new(&det, &scene.cloud, &PipelineConfig::default())?;
        for (i, d) in predictions.iter().enumerate() {
            let bbox = d.bbox();
            let s = explainer.explain(d, AttributeMask::ALL)?;
            objects.push(ExplainedObject {
                class: d.class,
                bbox,
                true_positive: tp.contains(&i),
                in_box_points: scene.cloud.iter().filter(|p| point_in_box(p.xyz(), &bbox)).count(),
                samples: canonicalize(&scene.cloud.points, &s.scores, &bbox)?,
            });
        }
    }

    let report = mode_report(&objects, 8)?;
    for (name, set) in [("true positives", &report.true_positives), ("false positives", &report.false_positives)] {
        println!("{name}: {} objects, {:.0} points per box", set.objects, set.mean_points);
        for (class, grid) in &set.maps {
            let avg = grid.averages();
            let peak = (0..avg.len()).max_by(|a, b| avg[*a].total_cmp(&avg[*b])).unwrap();
            let c = grid.cell_center(peak);
            println!(
                "  {class:?}: {} samples, peak cell at ({:+.2}, {:+.2}, {:+.2})",
                grid.total_ingested(),
                c[0],
                c[1],
                c[2]
            );
        }
    }
    if let Some(r) = report.density_ratio() {
        println!("false positives hold {r:.2}x the points of true positives");
    }
    Ok(())
}
