use std::f64::consts::PI;

use proptest::prelude::*;

use ffam::aggregate::CanonicalGrid;
use ffam::config::RunConfig;
use ffam::detection::AttributeMask;
use ffam::explain::{combine, normalize, ConceptMap};
use ffam::geometry::{canonicalize, from_canonical, iou_3d, point_in_box, to_canonical, CanonicalSample, OrientedBox};
use ffam::metrics::{energy_pg, pointing_game, vea};
use ffam::{Point, PointCloud, SaliencyMap};

fn boxes() -> impl Strategy<Value = OrientedBox> {
    ([-3.0..3.0f64, -3.0..3.0, -1.0..1.0], [0.2..4.0f64, 0.2..3.0, 0.2..2.0], -PI..PI)
        .prop_map(|(center, size, yaw)| OrientedBox { center, size, yaw })
}

fn cloud_and_scores() -> impl Strategy<Value = (Vec<[f64; 3]>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec([-4.0..4.0f64, -4.0..4.0, -2.0..2.0], n),
            prop::collection::vec(0.0..1.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_reflexive(a in boxes(), b in boxes()) {
        let ab = iou_3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - iou_3d(&b, &a)).abs() <= 1e-12);
        prop_assert!((iou_3d(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn canonical_frame_round_trips(b in boxes(), p in [-5.0..5.0f64, -5.0..5.0, -3.0..3.0]) {
        let q = to_canonical(p, &b);
        let back = from_canonical(q, &b);
        for i in 0..3 {
            prop_assert!((back[i] - p[i]).abs() <= 1e-9);
        }
        let strictly_inside = q.iter().all(|c| c.abs() < 0.5 - 1e-9);
        if strictly_inside {
            prop_assert!(point_in_box(p, &b));
        }
    }

    #[test]
    fn normalize_spans_the_unit_interval(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let n = normalize(&v);
        prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            prop_assert!(n.iter().any(|x| *x == 1.0) && n.iter().any(|x| *x == 0.0));
        } else {
            prop_assert!(n.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn combination_ignores_positive_rescaling(
        pairs in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 1..40),
        alpha in 0.01..100.0f64,
        beta in 0.01..100.0f64,
    ) {
        let (omega, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = combine(&omega, &ConceptMap::Factorized(v.clone())).unwrap();
        let scaled_omega: Vec<f64> = omega.iter().map(|x| x * alpha).collect();
        let scaled_v: Vec<f64> = v.iter().map(|x| x * beta).collect();
        let scaled = combine(&scaled_omega, &ConceptMap::Factorized(scaled_v)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let ones = combine(&omega, &ConceptMap::AllOnes).unwrap();
        prop_assert_eq!(ones, normalize(&omega));
    }

    #[test]
    fn localization_metrics_ignore_positive_rescaling(
        (pts, scores) in cloud_and_scores(),
        b in boxes(),
        alpha in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]),
    ) {
        let cloud: PointCloud = pts.iter().map(|p| Point::new(p[0], p[1], p[2], 0.0)).collect();
        prop_assume!(cloud.iter().any(|p| point_in_box(p.xyz(), &b)));
        let s = SaliencyMap::new(scores);
        let scaled = s.scaled(alpha);
        let v = vea(&s, &cloud, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        // Powers of two rescale exactly, so thresholds land on the same points.
        prop_assert_eq!(v, vea(&scaled, &cloud, &b).unwrap());
        prop_assert_eq!(pointing_game(&s, &cloud, &b).unwrap(), pointing_game(&scaled, &cloud, &b).unwrap());
        if s.sum() > 0.0 {
            let e = energy_pg(&s, &cloud, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((e - energy_pg(&scaled, &cloud, &b).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn canonical_averages_do_not_depend_on_order_or_split(
        samples in prop::collection::vec(([-0.6..0.6f64, -0.6..0.6, -0.6..0.6], 0.0..1.0f64), 0..200),
        split in 0usize..200,
    ) {
        let samples: Vec<CanonicalSample> = samples
            .into_iter()
            .map(|(position, saliency)| CanonicalSample { position, saliency })
            .collect();
        let mut forward = CanonicalGrid::new(4).unwrap();
        forward.accumulate(&samples);
        let mut reversed = CanonicalGrid::new(4).unwrap();
        let mut rev = samples.clone();
        rev.reverse();
        reversed.accumulate(&rev);
        let cut = split.min(samples.len());
        let mut left = CanonicalGrid::new(4).unwrap();
        left.accumulate(&samples[..cut]);
        let mut right = CanonicalGrid::new(4).unwrap();
        right.accumulate(&samples[cut..]);
        left.merge(&right).unwrap();
        prop_assert_eq!(forward.finalize(), reversed.finalize());
        prop_assert_eq!(forward.finalize(), left.finalize());
        prop_assert_eq!(forward.total_ingested(), samples.len() as u64);
        let kept: u64 = forward.counts().iter().map(|c| u64::from(*c)).sum();
        prop_assert_eq!(kept + forward.discarded(), samples.len() as u64);
    }

    #[test]
    fn canonicalize_keeps_saliency_and_count((pts, scores) in cloud_and_scores(), b in boxes()) {
        let points: Vec<Point> = pts.iter().map(|p| Point::new(p[0], p[1], p[2], 0.0)).collect();
        let out = canonicalize(&points, &scores, &b).unwrap();
        prop_assert_eq!(out.len(), points.len());
        prop_assert!(out.iter().zip(&scores).all(|(c, s)| c.saliency == *s));
    }

    #[test]
    fn mask_labels_parse_back(bits in 1u32..=255) {
        let mask = AttributeMask::from_bits(bits).unwrap();
        prop_assert_eq!(mask.label().parse::<AttributeMask>().unwrap(), mask);
    }

    #[test]
    fn config_text_reloads_to_the_same_hash(
        rank in 1usize..128,
        range in 0u32..5,
        block in 1u8..=4,
        count in 1usize..50,
        threshold in 0.05..0.95f64,
    ) {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[
            format!("nmf.rank={rank}"),
            format!("upsample.range={range}"),
            format!("pipeline.block={block}"),
            format!("scenes.count={count}"),
            format!("eval.threshold.car={threshold}"),
        ])
        .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
