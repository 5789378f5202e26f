//! Non-negative matrix factorization of voxel feature maps.
//!
//! A feature map `A` (one row per occupied voxel, one column per channel) is
//! approximated as `H·W` with both factors element-wise non-negative. Rows of
//! `W` are concept vectors; row `i` of `H` says how strongly voxel `i` mixes
//! each concept. Summing a row of `H` gives the global concept activation of
//! that voxel.
//!
//! The solver is the Lee–Seung multiplicative update for the Frobenius
//! objective, which keeps both factors non-negative and never increases the
//! objective.

use rand::distributions::Open01;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Added to every denominator of the multiplicative update.
pub const UPDATE_EPSILON: f64 = 1e-12;

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.values[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.values[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    fn transpose_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, rhs.rows, "row counts differ");
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let lhs_row = self.row(k);
            let rhs_row = rhs.row(k);
            for (i, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.values[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`; `rhs` is the small factor, so transposing it is cheap
    /// and keeps the inner loop in vectorizable axpy form.
    fn matmul_transpose(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.cols, "column counts differ");
        self.matmul(&rhs.transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfConfig {
    /// Number of concepts.
    pub rank: usize,
    pub max_iterations: usize,
    /// Stop once the objective decreases by less than this fraction in one iteration.
    pub relative_tolerance: f64,
    pub seed: u64,
    pub clamp_negatives: bool,
    /// Upper bound on consecutive updates of one factor per iteration. Repeats
    /// reuse the products involving `A`, so they cost a fraction of a full
    /// iteration; a repeat loop ends early once its step shrinks below 1% of
    /// the first step. `1` gives the textbook alternating update.
    pub inner_updates: usize,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            rank: 64,
            max_iterations: 200,
            relative_tolerance: 1e-5,
            seed: 0,
            clamp_negatives: false,
            inner_updates: 1,
        }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("NMF rank must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "NMF max_iterations must be at least 1".into(),
            ));
        }
        if self.inner_updates == 0 {
            return Err(Error::InvalidConfig(
                "NMF inner_updates must be at least 1".into(),
            ));
        }
        if !(self.relative_tolerance >= 0.0) {
            return Err(Error::InvalidConfig(
                "NMF relative_tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`factorize`]: `A ≈ H·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// Concept weights, one row per input row.
    pub h: DenseMatrix,
    /// Concept vectors, one row per concept.
    pub w: DenseMatrix,
    pub iterations_run: usize,
    /// `‖A − H·W‖²_F` after the last update.
    pub final_objective: f64,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.h.cols()
    }
}

/// Factorizes a non-negative matrix.
pub fn factorize(a: &DenseMatrix, cfg: &NmfConfig) -> Result<Factorization> {
    factorize_traced(a, cfg).map(|(f, _)| f)
}

/// Like [`factorize`], also returning the objective before the first update
/// followed by its value after every iteration.
pub fn factorize_traced(a: &DenseMatrix, cfg: &NmfConfig) -> Result<(Factorization, Vec<f64>)> {
    cfg.validate()?;
    let a = prepare_input(a, cfg.clamp_negatives)?;
    let (m, d) = (a.rows(), a.cols());
    let limit = m.min(d);
    if m == 0 || d == 0 || cfg.rank > limit {
        return Err(Error::RankTooLarge {
            rank: cfg.rank,
            limit,
        });
    }
    let r = cfg.rank;

    let (mut h, mut w) = initialize(&a, r, cfg.seed);
    let mut objective = residual(&a, &h, &w);
    let mut trace = vec![objective];
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        update_h(&a, &mut h, &w, cfg.inner_updates);
        update_w(&a, &h, &mut w, cfg.inner_updates);
        iterations += 1;

        debug_assert!(h.min() >= 0.0 && w.min() >= 0.0);
        let next = residual(&a, &h, &w);
        trace.push(next);
        let decrease = objective - next;
        objective = next;
        if objective == 0.0 || decrease < cfg.relative_tolerance * trace[trace.len() - 2] {
            break;
        }
    }

    Ok((
        Factorization {
            h,
            w,
            iterations_run: iterations,
            final_objective: objective,
        },
        trace,
    ))
}

fn prepare_input(a: &DenseMatrix, clamp: bool) -> Result<DenseMatrix> {
    match a.values.iter().position(|&v| v < 0.0) {
        None => Ok(a.clone()),
        Some(pos) if !clamp => Err(Error::NegativeInput {
            row: pos / a.cols,
            col: pos % a.cols,
            value: a.values[pos],
        }),
        Some(_) => Ok(DenseMatrix {
            rows: a.rows,
            cols: a.cols,
            values: a.values.iter().map(|v| v.max(0.0)).collect(),
        }),
    }
}

/// Uniform (0, 1) draws scaled by `sqrt(mean(A) / r)`; `H` is drawn first, row-major.
fn initialize(a: &DenseMatrix, r: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mean = a.values.iter().sum::<f64>() / a.values.len() as f64;
    let scale = (mean / r as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_: usize, _: usize| {
        let u: f64 = rng.sample(Open01);
        u * scale
    };
    let h = DenseMatrix::from_fn(a.rows(), r, &mut draw);
    let w = DenseMatrix::from_fn(r, a.cols(), &mut draw);
    (h, w)
}

/// Relative step size below which a run of repeated updates stops.
const INNER_STOP_RATIO: f64 = 0.01;

// H ← H ⊙ (A·Wᵀ) ⊘ (H·W·Wᵀ + ε), repeated up to `repeats` times.
fn update_h(a: &DenseMatrix, h: &mut DenseMatrix, w: &DenseMatrix, repeats: usize) {
    let numer = a.matmul_transpose(w);
    let wwt = w.matmul_transpose(w);
    repeat_update(h, repeats, |h| h.matmul(&wwt), &numer);
}

// W ← W ⊙ (Hᵀ·A) ⊘ (Hᵀ·H·W + ε), repeated up to `repeats` times.
fn update_w(a: &DenseMatrix, h: &DenseMatrix, w: &mut DenseMatrix, repeats: usize) {
    let numer = h.transpose_matmul(a);
    let hth = h.transpose_matmul(h);
    repeat_update(w, repeats, |w| hth.matmul(w), &numer);
}

fn repeat_update(
    x: &mut DenseMatrix,
    repeats: usize,
    denominator: impl Fn(&DenseMatrix) -> DenseMatrix,
    numer: &DenseMatrix,
) {
    let mut first_step = 0.0;
    for pass in 0..repeats {
        let denom = denominator(x);
        let mut step = 0.0;
        for ((xv, n), dv) in x.values.iter_mut().zip(&numer.values).zip(&denom.values) {
            let next = *xv * (n / (dv + UPDATE_EPSILON));
            step += (next - *xv) * (next - *xv);
            *xv = next;
        }
        if pass == 0 {
            first_step = step;
        } else if step <= INNER_STOP_RATIO * INNER_STOP_RATIO * first_step {
            break;
        }
    }
}

fn residual(a: &DenseMatrix, h: &DenseMatrix, w: &DenseMatrix) -> f64 {
    let approx = h.matmul(w);
    a.values
        .iter()
        .zip(&approx.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// The approximation `H·W`.
pub fn reconstruct(f: &Factorization) -> DenseMatrix {
    f.h.matmul(&f.w)
}

/// Global concept activation: the row sums of `H`, one entry per voxel.
pub fn global_concept_map(f: &Factorization) -> Vec<f64> {
    (0..f.h.rows()).map(|i| f.h.row(i).iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rank: usize) -> NmfConfig {
        NmfConfig {
            rank,
            max_iterations: 2000,
            relative_tolerance: 0.0,
            seed: 7,
            clamp_negatives: false,
            inner_updates: 10,
        }
    }

    #[test]
    fn identity_rank_two_is_exact() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let f = factorize(&a, &cfg(2)).unwrap();
        assert!(f.final_objective <= 1e-10, "{}", f.final_objective);
    }

    #[test]
    fn rank_one_matrix_is_exact() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        let f = factorize(&a, &cfg(1)).unwrap();
        assert!(f.final_objective <= 1e-8, "{}", f.final_objective);
    }

    #[test]
    fn negative_entry_is_rejected_unless_clamped() {
        let a = DenseMatrix::from_rows(&[[1.0, -0.5], [0.2, 1.0]]).unwrap();
        match factorize(&a, &cfg(1)) {
            Err(Error::NegativeInput { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let clamped = NmfConfig {
            clamp_negatives: true,
            ..cfg(1)
        };
        let f = factorize(&a, &clamped).unwrap();
        assert!(f.h.min() >= 0.0 && f.w.min() >= 0.0);
    }

    #[test]
    fn rank_above_min_dimension_is_rejected() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            factorize(&a, &cfg(2)),
            Err(Error::RankTooLarge { rank: 2, limit: 1 })
        ));
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let a = DenseMatrix::zeros(3, 4);
        let f = factorize(&a, &cfg(2)).unwrap();
        assert_eq!(f.final_objective, 0.0);
        assert_eq!(global_concept_map(&f), vec![0.0; 3]);
    }

    #[test]
    fn reconstruct_small_products() {
        let f = Factorization {
            h: DenseMatrix::from_rows(&[[1.0]]).unwrap(),
            w: DenseMatrix::from_rows(&[[2.0, 3.0]]).unwrap(),
            iterations_run: 0,
            final_objective: 0.0,
        };
        assert_eq!(reconstruct(&f).values(), &[2.0, 3.0]);

        let f = Factorization {
            h: DenseMatrix::zeros(4, 2),
            w: DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            iterations_run: 0,
            final_objective: 0.0,
        };
        assert!(reconstruct(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concept_map_is_row_sum() {
        let f = Factorization {
            h: DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            w: DenseMatrix::zeros(2, 3),
            iterations_run: 0,
            final_objective: 0.0,
        };
        assert_eq!(global_concept_map(&f), vec![3.0, 7.0]);
    }

    #[test]
    fn stops_on_relative_tolerance() {
        let a = DenseMatrix::from_fn(12, 9, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let loose = NmfConfig {
            rank: 3,
            max_iterations: 10_000,
            relative_tolerance: 1e-3,
            seed: 1,
            clamp_negatives: false,
            inner_updates: 1,
        };
        let f = factorize(&a, &loose).unwrap();
        assert!(f.iterations_run < 10_000);
    }

    #[test]
    fn shape_is_validated() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
