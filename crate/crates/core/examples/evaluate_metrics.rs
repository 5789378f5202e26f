//! Score saliency maps on a handful of scenes with every metric and print the
//! JSON lines a run would write.

use ffam::detector::{ReferenceDetector, ReferenceDetectorConfig};
use ffam::evaluate::{evaluate_scene, EvalOptions};
use ffam::explain::PipelineConfig;
use ffam::metrics::to_jsonl;
use ffam::scene::{synthetic_dataset, SceneConfig};

fn main() -> ffam::Result<()> {
    let det = ReferenceDetector::new(ReferenceDetectorConfig::default())?;
    let pipeline = PipelineConfig::default();
    let opts = EvalOptions::default();
    for scene in synthetic_dataset(100, 2, &SceneConfig::default()) {
        for s in evaluate_scene(&det, &scene, &pipeline, &opts)? {
            print!("{}", to_jsonl(&s.records("example")));
        }
    }
    Ok(())
}
