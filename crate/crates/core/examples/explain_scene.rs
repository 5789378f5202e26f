//! Explain every detection in a synthetic scene and write the saliency of the
//! first one as CSV.
//!
//! cargo run --release --example explain_scene -- [seed] [out.csv]

use ffam::detection::AttributeMask;
use ffam::detector::{Detector, ReferenceDetector, ReferenceDetectorConfig};
use ffam::explain::{PipelineConfig, SceneExplainer};
use ffam::geometry::point_in_box;
use ffam::io::{write_saliency, SaliencyFormat};
use ffam::scene::{synthetic_scene, SceneConfig};

fn main() -> ffam::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));
    let out = args.next().unwrap_or_else(|| "saliency.csv".into());

    let scene = synthetic_scene(seed, &SceneConfig::default());
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let predictions = det.detect(&scene.cloud)?;
    println!("{}: {} points, {} detections", scene.scene_id, scene.cloud.len(), predictions.len());

    // One factorization serves every detection in the scene.
    let explainer = SceneExplainer::new(&det, &scene.cloud, &PipelineConfig::default())?;
    for (i, d) in predictions.iter().enumerate() {
        let s = explainer.explain(d, AttributeMask::ALL)?;
        let top = s.argmax().map(|j| scene.cloud.iter().nth(j).unwrap().xyz());
        let hit = top.is_some_and(|p| point_in_box(p, &d.bbox()));
        println!(
            "  #{i} {:?} score {:.2} at ({:.1}, {:.1}) peak inside box: {hit}",
            d.class, d.score, d.center[0], d.center[1]
        );
        if i == 0 {
            write_saliency(&scene.cloud, &s, SaliencyFormat::Csv, &out)?;
            println!("  wrote {out}");
        }
    }
    Ok(())
}
