//! Explains every well-detected object of a scene and scores the explanation.

use crate::cloud::SaliencyMap;
use crate::detection::{AttributeMask, ClassLabel, Detection};
use crate::detector::Detector;
use crate::error::Result;
use crate::explain::{PipelineConfig, SceneExplainer};
use crate::metrics::{
    auc, deletion_curve, energy_pg, insertion_curve, pointing_game, vea, well_detected,
    EvalThresholds, MetricRecord,
};
use crate::scene::SceneRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub thresholds: EvalThresholds,
    pub steps: usize,
    pub mask: AttributeMask,
    /// Skip the detector reruns behind deletion and insertion.
    pub skip_curves: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            thresholds: EvalThresholds::default(),
            steps: crate::metrics::DEFAULT_STEPS,
            mask: AttributeMask::ALL,
            skip_curves: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScores {
    pub scene_id: String,
    /// Index of the prediction in the detector's output.
    pub detection_id: usize,
    pub class: ClassLabel,
    pub deletion_auc: Option<f64>,
    pub insertion_auc: Option<f64>,
    pub vea: f64,
    pub pointing_game: bool,
    pub energy_pg: f64,
}

impl ObjectScores {
    pub fn records(&self, config_hash: &str) -> Vec<MetricRecord> {
        let mut named = Vec::new();
        if let Some(v) = self.deletion_auc {
            named.push(("deletion_auc", v));
        }
        if let Some(v) = self.insertion_auc {
            named.push(("insertion_auc", v));
        }
        named.push(("vea", self.vea));
        named.push(("pg", if self.pointing_game { 1.0 } else { 0.0 }));
        named.push(("enpg", self.energy_pg));
        named
            .into_iter()
            .map(|(metric, value)| MetricRecord {
                scene_id: self.scene_id.clone(),
                detection_id: self.detection_id,
                metric: metric.to_string(),
                value,
                config_hash: config_hash.to_string(),
            })
            .collect()
    }
}

/// A well-detected prediction together with its saliency map.
pub struct Explained {
    pub detection_id: usize,
    pub detection: Detection,
    pub ground_truth: usize,
    pub saliency: SaliencyMap,
}

/// Saliency maps for every well-detected prediction in the scene.
pub fn explain_well_detected<D: Detector + ?Sized>(
    detector: &D,
    scene: &SceneRecord,
    pipeline: &PipelineConfig,
    opts: &EvalOptions,
) -> Result<Vec<Explained>> {
    let predictions = detector.detect(&scene.cloud)?;
    let matches = well_detected(&predictions, &scene.ground_truth, &opts.thresholds);
    if matches.is_empty() {
        return Ok(Vec::new());
    }
    let explainer = SceneExplainer::new(detector, &scene.cloud, pipeline)?;
    matches
        .iter()
        .map(|m| {
            let d = predictions[m.prediction];
            Ok(Explained {
                detection_id: m.prediction,
                detection: d,
                ground_truth: m.ground_truth,
                saliency: explainer.explain(&d, opts.mask)?,
            })
        })
        .collect()
}

/// Scores one saliency map of a well-detected object.
pub fn score_saliency<D: Detector + ?Sized>(
    detector: &D,
    scene: &SceneRecord,
    e: &Explained,
    opts: &EvalOptions,
) -> Result<ObjectScores> {
    let gt = &scene.ground_truth[e.ground_truth].bbox;
    let cloud = &scene.cloud;
    let (deletion_auc, insertion_auc) = if opts.skip_curves {
        (None, None)
    } else {
        let del = deletion_curve(detector, cloud, &e.detection, &e.saliency, opts.steps)?;
        let ins = insertion_curve(detector, cloud, &e.detection, &e.saliency, opts.steps)?;
        (Some(auc(&del)), Some(auc(&ins)))
    };
    Ok(ObjectScores {
        scene_id: scene.scene_id.clone(),
        detection_id: e.detection_id,
        class: e.detection.class,
        deletion_auc,
        insertion_auc,
        vea: vea(&e.saliency, cloud, gt)?,
        pointing_game: pointing_game(&e.saliency, cloud, gt)?,
        energy_pg: energy_pg(&e.saliency, cloud, gt)?,
    })
}

pub fn evaluate_scene<D: Detector + ?Sized>(
    detector: &D,
    scene: &SceneRecord,
    pipeline: &PipelineConfig,
    opts: &EvalOptions,
) -> Result<Vec<ObjectScores>> {
    explain_well_detected(detector, scene, pipeline, opts)?
        .iter()
        .map(|e| score_saliency(detector, scene, e, opts))
        .collect()
}
