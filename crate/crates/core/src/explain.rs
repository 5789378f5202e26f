//! Object-specific saliency: gradient magnitude per voxel, weighted by the
//! global concept activation of the factorized feature map, upsampled to points.

use std::fmt;
use std::str::FromStr;

use crate::cloud::{PointCloud, SaliencyMap};
use crate::detection::{AttributeMask, Detection};
use crate::detector::{check_block, Detector, FeatureMap, GradientMap};
use crate::error::{Error, Result};
use crate::nmf::{factorize, global_concept_map, DenseMatrix, NmfConfig};
use crate::voxel::{nearest_voxel_lookup, upsample_to_points, SparseVoxelMap, UpsampleConfig};

/// L1 distance between the masked attributes of `d` and an all-zero baseline.
pub fn object_loss(d: &Detection, mask: AttributeMask) -> f64 {
    let values = d.attributes();
    mask.attributes().map(|a| values[a as usize].abs()).sum()
}

/// Per-voxel L1 norm of the gradient across channels.
pub fn channel_aggregate(g: &GradientMap) -> Vec<f64> {
    g.payload()
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum())
        .collect()
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to zeros.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect()
}

/// Voxel weighting applied on top of the gradient term.
#[derive(Debug, Clone, PartialEq)]
pub enum ConceptMap {
    /// Row sums of the NMF activation factor `H`; normalized before use.
    Factorized(Vec<f64>),
    /// Identity weighting, used as-is.
    AllOnes,
}

/// `Φ(ω) ⊙ Φ(V)`.
pub fn combine(omega: &[f64], concept: &ConceptMap) -> Result<Vec<f64>> {
    let w = normalize(omega);
    match concept {
        ConceptMap::AllOnes => Ok(w),
        ConceptMap::Factorized(v) => {
            if v.len() != omega.len() {
                return Err(Error::LengthMismatch {
                    expected: omega.len(),
                    actual: v.len(),
                });
            }
            Ok(w.iter().zip(normalize(v)).map(|(a, b)| a * b).collect())
        }
    }
}

/// Which parts of the pipeline run.
///
/// | variant         | concept map | point mapping     |
/// |-----------------|-------------|-------------------|
/// | `Full`          | NMF         | kernel upsampling |
/// | `NoFf`          | all ones    | kernel upsampling |
/// | `NoVu`          | NMF         | own voxel         |
/// | `GradientOnly`  | all ones    | own voxel         |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Ablation {
    #[default]
    Full,
    NoFf,
    NoVu,
    GradientOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoFf,
        Ablation::NoVu,
        Ablation::GradientOnly,
    ];

    pub fn uses_concepts(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoVu)
    }

    pub fn uses_upsampling(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoFf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoFf => "no_ff",
            Ablation::NoVu => "no_vu",
            Ablation::GradientOnly => "gradient_only",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub nmf: NmfConfig,
    pub upsample: UpsampleConfig,
    pub block_index: u8,
    pub ablation: Ablation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nmf: NmfConfig::default(),
            upsample: UpsampleConfig::default(),
            block_index: 3,
            ablation: Ablation::Full,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.nmf.validate()?;
        self.upsample.validate()?;
        check_block(self.block_index)
    }
}

/// Per-scene state shared by every detection explained in that scene:
/// one feature map and one factorization.
pub struct SceneExplainer<'a, D: Detector + ?Sized> {
    detector: &'a D,
    cloud: &'a PointCloud,
    cfg: PipelineConfig,
    features: FeatureMap,
    concept: ConceptMap,
}

impl<'a, D: Detector + ?Sized> SceneExplainer<'a, D> {
    pub fn new(detector: &'a D, cloud: &'a PointCloud, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let features = detector.features(cloud, cfg.block_index)?;
        let concept = if cfg.ablation.uses_concepts() {
            ConceptMap::Factorized(concept_activation(&features, &cfg.nmf)?)
        } else {
            ConceptMap::AllOnes
        };
        Ok(Self {
            detector,
            cloud,
            cfg: cfg.clone(),
            features,
            concept,
        })
    }

    /// The same scene under another ablation, reusing the features and,
    /// when one exists, the factorization.
    pub fn with_ablation(&self, ablation: Ablation) -> Result<Self> {
        let concept = match (&self.concept, ablation.uses_concepts()) {
            (_, false) => ConceptMap::AllOnes,
            (ConceptMap::Factorized(v), true) => ConceptMap::Factorized(v.clone()),
            (ConceptMap::AllOnes, true) => {
                ConceptMap::Factorized(concept_activation(&self.features, &self.cfg.nmf)?)
            }
        };
        Ok(Self {
            detector: self.detector,
            cloud: self.cloud,
            cfg: PipelineConfig {
                ablation,
                ..self.cfg.clone()
            },
            features: self.features.clone(),
            concept,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn concept_map(&self) -> &ConceptMap {
        &self.concept
    }

    /// Combined voxel activation `M` for one detection.
    pub fn voxel_activation(&self, d: &Detection, mask: AttributeMask) -> Result<SparseVoxelMap<f64>> {
        let g = self
            .detector
            .gradient(self.cloud, d, mask, self.cfg.block_index)?;
        if g.coords() != self.features.coords() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} voxels, features {} (or a different order)",
                g.len(),
                self.features.len()
            )));
        }
        let combined = combine(&channel_aggregate(&g), &self.concept)?;
        self.features.with_payload(combined)
    }

    pub fn explain(&self, d: &Detection, mask: AttributeMask) -> Result<SaliencyMap> {
        let m = self.voxel_activation(d, mask)?;
        Ok(if self.cfg.ablation.uses_upsampling() {
            upsample_to_points(&m, self.cloud, &self.cfg.upsample)
        } else {
            nearest_voxel_lookup(&m, self.cloud)
        })
    }
}

/// Global concept activation of a feature map. The rank is capped by the
/// map's own dimensions, so small or low-dimensional maps still factorize.
pub fn concept_activation(features: &FeatureMap, cfg: &NmfConfig) -> Result<Vec<f64>> {
    let m = features.len();
    let d = features.payload().first().map_or(0, Vec::len);
    if m == 0 || d == 0 {
        return Ok(vec![0.0; m]);
    }
    let a = DenseMatrix::from_rows(features.payload())?;
    let cfg = NmfConfig {
        rank: cfg.rank.min(m).min(d),
        ..cfg.clone()
    };
    Ok(global_concept_map(&factorize(&a, &cfg)?))
}

/// Saliency of one detection, factorizing the scene's features on the way.
pub fn ffam_explain<D: Detector + ?Sized>(
    detector: &D,
    cloud: &PointCloud,
    d: &Detection,
    mask: AttributeMask,
    cfg: &PipelineConfig,
) -> Result<SaliencyMap> {
    SceneExplainer::new(detector, cloud, cfg)?.explain(d, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Attribute, ClassLabel};
    use crate::detector::{ReferenceDetector, ReferenceDetectorConfig};
    use crate::geometry::point_in_box;
    use crate::scene::{synthetic_scene, SceneConfig};

    fn det() -> Detection {
        Detection {
            center: [1.0, 2.0, 3.0],
            size: [4.0, 2.0, 1.5],
            yaw: 0.0,
            score: 0.9,
            class: ClassLabel::Car,
        }
    }

    #[test]
    fn loss_examples() {
        assert!((object_loss(&det(), AttributeMask::ALL) - 14.4).abs() < 1e-12);
        assert_eq!(object_loss(&det(), AttributeMask::only(Attribute::Height)), 1.5);
        let zero = Detection {
            center: [0.0; 3],
            size: [0.0; 3],
            score: 0.0,
            ..det()
        };
        assert_eq!(object_loss(&zero, AttributeMask::ALL), 0.0);
        let a: AttributeMask = "xyz".parse().unwrap();
        let b: AttributeMask = "lwhs".parse().unwrap();
        let sum = object_loss(&det(), a) + object_loss(&det(), b);
        assert!((object_loss(&det(), a.union(b)) - sum).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 7.0]), vec![0.0, 1.0]);
        assert_eq!(normalize(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
        let v = normalize(&[0.0, 1.0, 3.0]);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[2], 1.0);
        assert!(normalize(&[]).is_empty());
    }

    #[test]
    fn combine_examples() {
        let out = combine(&[0.0, 1.0], &ConceptMap::Factorized(vec![1.0, 0.0])).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        let v = vec![0.0, 0.5, 1.0];
        let out = combine(&v, &ConceptMap::Factorized(v.clone())).unwrap();
        assert_eq!(out, vec![0.0, 0.25, 1.0]);
        assert_eq!(combine(&[2.0, 4.0, 3.0], &ConceptMap::AllOnes).unwrap(), vec![0.0, 1.0, 0.5]);
        assert!(combine(&[1.0], &ConceptMap::Factorized(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn combination_ignores_gradient_scale() {
        let w = [0.3, 1.7, 0.2, 5.0];
        let v = ConceptMap::Factorized(vec![1.0, 3.0, 2.0, 0.5]);
        let scaled: Vec<f64> = w.iter().map(|x| x * 37.5).collect();
        let a = combine(&w, &v).unwrap();
        let b = combine(&scaled, &v).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn full_pipeline_points_at_the_object() {
        let detector = ReferenceDetector::new(ReferenceDetectorConfig::default()).unwrap();
        let scene = synthetic_scene(12, &SceneConfig::single_object());
        let d = detector.detect(&scene.cloud).unwrap();
        let gt = &scene.ground_truth[0];
        let target = d
            .iter()
            .find(|d| point_in_box(d.center, &gt.bbox))
            .expect("object detected");
        let cfg = PipelineConfig::default();
        let s = ffam_explain(&detector, &scene.cloud, target, AttributeMask::ALL, &cfg).unwrap();
        assert_eq!(s.len(), scene.cloud.len());
        assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
        let top = s.argmax().unwrap();
        assert!(point_in_box(scene.cloud.points[top].xyz(), &gt.bbox));
        let again = ffam_explain(&detector, &scene.cloud, target, AttributeMask::ALL, &cfg).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn switching_ablation_matches_a_fresh_explainer() {
        let detector = ReferenceDetector::new(ReferenceDetectorConfig::default()).unwrap();
        let scene = synthetic_scene(4, &SceneConfig::single_object());
        let d = detector.detect(&scene.cloud).unwrap()[0];
        let base = SceneExplainer::new(&detector, &scene.cloud, &PipelineConfig::default()).unwrap();
        let start = base.with_ablation(Ablation::GradientOnly).unwrap();
        for ab in Ablation::ALL {
            let cfg = PipelineConfig {
                ablation: ab,
                ..PipelineConfig::default()
            };
            let fresh = SceneExplainer::new(&detector, &scene.cloud, &cfg).unwrap();
            for ex in [base.with_ablation(ab).unwrap(), start.with_ablation(ab).unwrap()] {
                assert_eq!(ex.config(), &cfg);
                assert_eq!(
                    ex.explain(&d, AttributeMask::ALL).unwrap(),
                    fresh.explain(&d, AttributeMask::ALL).unwrap()
                );
            }
        }
    }

    #[test]
    fn no_vu_takes_the_own_voxel_value() {
        let detector = ReferenceDetector::new(ReferenceDetectorConfig::default()).unwrap();
        let scene = synthetic_scene(4, &SceneConfig::single_object());
        let d = detector.detect(&scene.cloud).unwrap()[0];
        let cfg = PipelineConfig {
            ablation: Ablation::NoVu,
            ..PipelineConfig::default()
        };
        let ex = SceneExplainer::new(&detector, &scene.cloud, &cfg).unwrap();
        let m = ex.voxel_activation(&d, AttributeMask::ALL).unwrap();
        let s = ex.explain(&d, AttributeMask::ALL).unwrap();
        assert_eq!(s, nearest_voxel_lookup(&m, &scene.cloud));
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert!("nope".parse::<Ablation>().is_err());
    }
}
