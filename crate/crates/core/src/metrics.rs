//! Saliency evaluation: deletion and insertion curves with their AUC, visual
//! explanation accuracy (VEA), the pointing game and its energy variant, and
//! greedy matching of predictions to ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SaliencyMap};
use crate::detection::{ClassLabel, Detection, GroundTruth};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::geometry::{box_diagonal, iou_3d, point_in_box, OrientedBox};

pub const DEFAULT_STEPS: usize = 20;

/// Detection quality as points are removed or added, one value per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    steps: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(steps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if steps.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: steps.len(),
                actual: values.len(),
            });
        }
        let ordered = steps.windows(2).all(|w| w[0] < w[1]);
        if steps.len() < 2 || steps[0] != 0.0 || steps[steps.len() - 1] != 1.0 || !ordered {
            return Err(Error::InvalidConfig(
                "curve steps must increase strictly from 0 to 1".into(),
            ));
        }
        if !values.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig("curve values must lie in [0, 1]".into()));
        }
        Ok(Self { steps, values })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Trapezoidal area under the curve; the step axis already spans exactly 1.
pub fn auc(curve: &Curve) -> f64 {
    curve
        .steps
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(s, v)| (s[1] - s[0]) * (v[0] + v[1]) / 2.0)
        .sum()
}

/// Per-class IoU a prediction needs to count as well-detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalThresholds {
    pub car: f64,
    pub pedestrian: f64,
    pub cyclist: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self {
            car: 0.7,
            pedestrian: 0.5,
            cyclist: 0.5,
        }
    }
}

impl EvalThresholds {
    pub fn for_class(&self, class: ClassLabel) -> f64 {
        match class {
            ClassLabel::Car => self.car,
            ClassLabel::Pedestrian => self.pedestrian,
            ClassLabel::Cyclist => self.cyclist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.car, self.pedestrian, self.cyclist]
            .iter()
            .all(|t| *t > 0.0 && *t <= 1.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("IoU thresholds must lie in (0, 1]".into()))
        }
    }
}

/// Points within twice the box diagonal of the detection's center; only these
/// are removed or inserted.
pub fn region_mask(cloud: &PointCloud, d: &Detection) -> Vec<bool> {
    let radius = 2.0 * box_diagonal(&d.bbox());
    cloud
        .iter()
        .map(|p| {
            let q = p.xyz();
            let dist2: f64 = (0..3).map(|i| (q[i] - d.center[i]).powi(2)).sum();
            dist2 <= radius * radius
        })
        .collect()
}

/// Best IoU between `target` and any same-class prediction (0 if there is none).
pub fn tracked_iou(predictions: &[Detection], target: &Detection) -> f64 {
    let b = target.bbox();
    predictions
        .iter()
        .filter(|p| p.class == target.class)
        .map(|p| iou_3d(&p.bbox(), &b))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Deletion,
    Insertion,
}

fn perturbation_curve<D: Detector + ?Sized>(
    detector: &D,
    cloud: &PointCloud,
    d: &Detection,
    saliency: &SaliencyMap,
    steps: usize,
    sweep: Sweep,
) -> Result<Curve> {
    saliency.check_aligned(cloud)?;
    if steps == 0 {
        return Err(Error::InvalidConfig("curves need at least one step".into()));
    }
    let in_region = region_mask(cloud, d);
    let order: Vec<usize> = saliency
        .descending_order()
        .into_iter()
        .filter(|&i| in_region[i])
        .collect();
    if order.is_empty() {
        return Err(Error::NoRegionPoints);
    }
    // rank[i] = position of point i in the salient-first order of the region.
    let mut rank = vec![usize::MAX; cloud.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let total = order.len();
    let values = (0..=steps)
        .into_par_iter()
        .map(|step| {
            let k = step * total / steps;
            let keep: Vec<bool> = rank
                .iter()
                .map(|&r| match (r == usize::MAX, sweep) {
                    (true, _) => true,
                    (false, Sweep::Deletion) => r >= k,
                    (false, Sweep::Insertion) => r < k,
                })
                .collect();
            let scene = cloud.filter_mask(&keep);
            if scene.is_empty() {
                return Ok(0.0);
            }
            Ok(tracked_iou(&detector.detect(&scene)?, d))
        })
        .collect::<Result<Vec<f64>>>()?;
    let fractions = (0..=steps).map(|s| s as f64 / steps as f64).collect();
    Curve::new(fractions, values)
}

/// Removes region points most-salient first in `steps` equal batches, tracking
/// how well the detector still finds `d`.
pub fn deletion_curve<D: Detector + ?Sized>(
    detector: &D,
    cloud: &PointCloud,
    d: &Detection,
    saliency: &SaliencyMap,
    steps: usize,
) -> Result<Curve> {
    perturbation_curve(detector, cloud, d, saliency, steps, Sweep::Deletion)
}

/// Starts from the scene with its region emptied and adds region points
/// most-salient first.
pub fn insertion_curve<D: Detector + ?Sized>(
    detector: &D,
    cloud: &PointCloud,
    d: &Detection,
    saliency: &SaliencyMap,
    steps: usize,
) -> Result<Curve> {
    perturbation_curve(detector, cloud, d, saliency, steps, Sweep::Insertion)
}

/// Thresholds `0.05, 0.10, ..., 0.95` used by [`vea`].
pub fn vea_thresholds() -> Vec<f64> {
    (1..20).map(|i| f64::from(i) / 20.0).collect()
}

/// Best point-set IoU between the thresholded, max-normalized saliency and
/// the points inside the ground-truth box.
pub fn vea(saliency: &SaliencyMap, cloud: &PointCloud, gt: &OrientedBox) -> Result<f64> {
    saliency.check_aligned(cloud)?;
    let inside: Vec<bool> = cloud.iter().map(|p| point_in_box(p.xyz(), gt)).collect();
    let gt_count = inside.iter().filter(|v| **v).count();
    if gt_count == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let max = saliency.max();
    if max <= 0.0 {
        return Ok(0.0);
    }
    let normalized: Vec<f64> = saliency.scores.iter().map(|s| s / max).collect();
    let mut best: f64 = 0.0;
    for t in vea_thresholds() {
        let mut inter = 0usize;
        let mut predicted = 0usize;
        for (v, g) in normalized.iter().zip(&inside) {
            if *v >= t {
                predicted += 1;
                if *g {
                    inter += 1;
                }
            }
        }
        let union = predicted + gt_count - inter;
        best = best.max(inter as f64 / union as f64);
    }
    Ok(best)
}

/// Whether the most salient point (lowest index on ties) lies inside the box.
pub fn pointing_game(saliency: &SaliencyMap, cloud: &PointCloud, gt: &OrientedBox) -> Result<bool> {
    saliency.check_aligned(cloud)?;
    let top = saliency.argmax().ok_or(Error::EmptyCloud)?;
    Ok(point_in_box(cloud.points[top].xyz(), gt))
}

/// Fraction of total saliency mass on points inside the box.
pub fn energy_pg(saliency: &SaliencyMap, cloud: &PointCloud, gt: &OrientedBox) -> Result<f64> {
    saliency.check_aligned(cloud)?;
    let total = saliency.sum();
    if !(total > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let inside: f64 = cloud
        .iter()
        .zip(&saliency.scores)
        .filter(|(p, _)| point_in_box(p.xyz(), gt))
        .map(|(_, s)| s)
        .sum();
    Ok(inside / total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Greedy one-to-one matching within each class by descending IoU, keeping
/// pairs at or above the class threshold. Sorted by prediction index.
pub fn well_detected(
    predictions: &[Detection],
    gts: &[GroundTruth],
    thresholds: &EvalThresholds,
) -> Vec<Match> {
    let mut pairs = Vec::new();
    for (p, pred) in predictions.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            if pred.class != gt.class {
                continue;
            }
            let iou = iou_3d(&pred.bbox(), &gt.bbox);
            if iou >= thresholds.for_class(gt.class) {
                pairs.push(Match {
                    prediction: p,
                    ground_truth: g,
                    iou,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.prediction.cmp(&b.prediction))
            .then(a.ground_truth.cmp(&b.ground_truth))
    });
    let mut used_p = vec![false; predictions.len()];
    let mut used_g = vec![false; gts.len()];
    let mut out = Vec::new();
    for m in pairs {
        if !used_p[m.prediction] && !used_g[m.ground_truth] {
            used_p[m.prediction] = true;
            used_g[m.ground_truth] = true;
            out.push(m);
        }
    }
    out.sort_by_key(|m| m.prediction);
    out
}

/// One line of metric output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scene_id: String,
    pub detection_id: usize,
    pub metric: String,
    pub value: f64,
    pub config_hash: String,
}

pub fn to_jsonl(records: &[MetricRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("plain record serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;

    fn unit_box() -> OrientedBox {
        OrientedBox::new([0.0; 3], [2.0; 3], 0.0).unwrap()
    }

    fn cloud(xs: &[f64]) -> PointCloud {
        xs.iter().map(|x| Point::new(*x, 0.0, 0.0, 0.0)).collect()
    }

    #[test]
    fn auc_examples() {
        let flat = Curve::new(vec![0.0, 0.5, 1.0], vec![0.3; 3]).unwrap();
        assert!((auc(&flat) - 0.3).abs() < 1e-15);
        let ramp = Curve::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(auc(&ramp), 0.5);
        let c = Curve::new(vec![0.0, 0.25, 1.0], vec![1.0, 0.5, 0.0]).unwrap();
        assert!((auc(&c) - (0.25 * 0.75 + 0.75 * 0.25)).abs() < 1e-15);
        assert!(Curve::new(vec![0.0, 0.5], vec![0.0, 0.0]).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![0.0, 1.5]).is_err());
    }

    #[test]
    fn vea_examples() {
        let pts = cloud(&[0.0, 0.5, 5.0, 6.0]);
        let b = unit_box();
        let exact = SaliencyMap::new(vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(vea(&exact, &pts, &b).unwrap(), 1.0);
        let uniform = SaliencyMap::new(vec![0.4; 4]);
        assert_eq!(vea(&uniform, &pts, &b).unwrap(), 0.5);
        assert_eq!(vea(&SaliencyMap::new(vec![0.0; 4]), &pts, &b).unwrap(), 0.0);
        let far = OrientedBox::new([50.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap();
        assert!(matches!(vea(&exact, &pts, &far), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn pointing_game_examples() {
        let pts = cloud(&[0.0, 100.0]);
        let b = unit_box();
        assert!(pointing_game(&SaliencyMap::new(vec![1.0, 0.5]), &pts, &b).unwrap());
        assert!(!pointing_game(&SaliencyMap::new(vec![0.1, 0.5]), &pts, &b).unwrap());
        assert!(pointing_game(&SaliencyMap::new(vec![0.5, 0.5]), &pts, &b).unwrap());
    }

    #[test]
    fn energy_examples() {
        let pts = cloud(&[0.0, 0.5, 100.0]);
        let b = unit_box();
        assert_eq!(energy_pg(&SaliencyMap::new(vec![1.0, 2.0, 0.0]), &pts, &b).unwrap(), 1.0);
        assert_eq!(energy_pg(&SaliencyMap::new(vec![0.0, 0.0, 3.0]), &pts, &b).unwrap(), 0.0);
        assert_eq!(energy_pg(&SaliencyMap::new(vec![1.0, 0.0, 1.0]), &pts, &b).unwrap(), 0.5);
        assert!(matches!(
            energy_pg(&SaliencyMap::new(vec![0.0; 3]), &pts, &b),
            Err(Error::ZeroEnergy)
        ));
    }

    fn car(x: f64) -> Detection {
        Detection {
            center: [x, 0.0, 0.0],
            size: [4.0, 2.0, 1.5],
            yaw: 0.0,
            score: 0.9,
            class: ClassLabel::Car,
        }
    }

    #[test]
    fn matching_examples() {
        let gt = GroundTruth {
            bbox: car(0.0).bbox(),
            class: ClassLabel::Car,
        };
        let th = EvalThresholds::default();
        assert_eq!(well_detected(&[car(0.0)], &[gt], &th).len(), 1);
        // Shift giving IoU 0.6: overlap length 4 - s with union 4 + s.
        let s = 4.0 * 0.4 / 1.6;
        assert!((iou_3d(&car(s).bbox(), &gt.bbox) - 0.6).abs() < 1e-12);
        assert!(well_detected(&[car(s)], &[gt], &th).is_empty());
        let m = well_detected(&[car(0.3), car(0.1)], &[gt], &th);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].prediction, 1);
        let ped = Detection {
            class: ClassLabel::Pedestrian,
            ..car(0.0)
        };
        assert!(well_detected(&[ped], &[gt], &th).is_empty());
    }

    #[test]
    fn jsonl_lines() {
        let r = MetricRecord {
            scene_id: "s".into(),
            detection_id: 2,
            metric: "vea".into(),
            value: 0.25,
            config_hash: "ab".into(),
        };
        let text = to_jsonl(&[r.clone(), r]);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(
            r#"{"scene_id":"s","detection_id":2,"metric":"vea","value":0.25,"config_hash":"ab"}"#
        ));
    }
}
