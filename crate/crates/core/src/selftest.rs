//! Built-in consistency suites behind `ffam selftest`.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{grad_check, ReferenceDetectorConfig};
use crate::error::Result;
use crate::geometry::{iou_3d, point_in_box, OrientedBox};
use crate::nmf::{factorize_traced, DenseMatrix, NmfConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the suite's own unit.
    pub worst: f64,
    pub limit: f64,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} cases ok, worst {:.3e} (limit {:.0e}), {:.1?}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases - self.failures,
            self.cases,
            self.worst,
            self.limit,
            self.elapsed
        )
    }
}

/// Analytic gradients against central differences on gradient-check scenes.
pub fn gradient_suite(cfg: &ReferenceDetectorConfig, seeds: &[u64]) -> Result<SuiteReport> {
    let start = Instant::now();
    let limit = 1e-4;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for &seed in seeds {
        let e = grad_check(cfg, seed)?;
        worst = worst.max(e);
        failures += usize::from(!(e <= limit));
    }
    Ok(SuiteReport {
        name: "gradient",
        cases: seeds.len(),
        failures,
        worst,
        limit,
        elapsed: start.elapsed(),
    })
}

/// A seeded non-negative matrix of inner rank at most `rank`.
pub fn low_rank_matrix(seed: u64, max_side: usize, max_rank: usize) -> (DenseMatrix, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(8..=max_side);
    let d = rng.gen_range(8..=max_side);
    let r = rng.gen_range(1..=max_rank).min(m).min(d);
    let k = rng.gen_range(1..=r);
    let h = DenseMatrix::from_fn(m, k, |_, _| rng.gen::<f64>());
    let w = DenseMatrix::from_fn(k, d, |_, _| rng.gen::<f64>());
    (h.matmul(&w), r)
}

/// Settings under which low-rank inputs factorize to a relative objective of 1e-6.
pub fn exact_nmf_config(rank: usize, seed: u64) -> NmfConfig {
    NmfConfig {
        rank,
        max_iterations: 500,
        relative_tolerance: 1e-12,
        seed,
        inner_updates: 20,
        ..NmfConfig::default()
    }
}

/// Objective traces must never rise by more than rounding
/// (`f64::EPSILON · ‖A‖²`), and low-rank inputs must be recovered.
pub fn nmf_suite(cases: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let limit = 1e-6;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for seed in 0..cases {
        let (a, r) = low_rank_matrix(seed, 64, 16);
        let norm = a.squared_norm();
        let (f, trace) = factorize_traced(&a, &exact_nmf_config(r, seed))?;
        let monotone = trace.windows(2).all(|w| w[1] <= w[0] + f64::EPSILON * norm);
        let rel = f.final_objective / norm;
        worst = worst.max(rel);
        failures += usize::from(!monotone || !(rel <= limit));
    }
    Ok(SuiteReport {
        name: "nmf",
        cases: cases as usize,
        failures,
        worst,
        limit,
        elapsed: start.elapsed(),
    })
}

/// A seeded pair of boxes, overlapping more often than not.
pub fn random_box_pair(rng: &mut impl Rng) -> (OrientedBox, OrientedBox) {
    let mut b = || OrientedBox {
        center: [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)),
        size: [0, 1, 2].map(|_| rng.gen_range(0.5..3.0)),
        yaw: rng.gen_range(-PI..PI),
    };
    (b(), b())
}

/// IoU estimated from uniform samples over the pair's bounding region.
pub fn monte_carlo_iou(a: &OrientedBox, b: &OrientedBox, samples: usize, rng: &mut impl Rng) -> f64 {
    let reach = |x: &OrientedBox| 0.5 * (x.size[0].hypot(x.size[1]));
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for x in [a, b] {
        let half = [reach(x), reach(x), x.size[2] / 2.0];
        for i in 0..3 {
            lo[i] = lo[i].min(x.center[i] - half[i]);
            hi[i] = hi[i].max(x.center[i] + half[i]);
        }
    }
    let (mut in_a, mut in_b, mut both) = (0usize, 0usize, 0usize);
    for _ in 0..samples {
        let p = [0, 1, 2].map(|i| rng.gen_range(lo[i]..hi[i]));
        let (ia, ib) = (point_in_box(p, a), point_in_box(p, b));
        in_a += usize::from(ia);
        in_b += usize::from(ib);
        both += usize::from(ia && ib);
    }
    let union = in_a + in_b - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

pub fn iou_suite(pairs: usize, samples: usize, seed: u64, limit: f64) -> SuiteReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..pairs {
        let (a, b) = random_box_pair(&mut rng);
        let exact = iou_3d(&a, &b);
        let err = (exact - monte_carlo_iou(&a, &b, samples, &mut rng))
            .abs()
            .max((exact - iou_3d(&b, &a)).abs());
        worst = worst.max(err);
        failures += usize::from(!(err <= limit));
    }
    SuiteReport {
        name: "iou",
        cases: pairs,
        failures,
        worst,
        limit,
        elapsed: start.elapsed(),
    }
}
