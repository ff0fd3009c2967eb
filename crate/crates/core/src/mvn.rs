//! Multivariate normal rectangle probabilities.
//!
//! Genz's separation-of-variables transform turns `P(a < Z <= b)` for
//! `Z ~ N(0, R)` into an integral over the unit cube of dimension `d - 1`.
//! Variables are reordered on the fly (most constrained first) while the
//! Cholesky factor is built, which lowers the integrand variance. The cube
//! is sampled with a randomly shifted extensible rank-1 lattice in base 2,
//! taken in radical-inverse order so every prefix of length `2^k` is a full
//! lattice. In low dimension a sin² periodizing transform smooths the
//! integrand at the cube faces; above that its Jacobian gets too rough and
//! the tent transform is used instead. The spread across independent shifts
//! gives the error estimate.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{quantile_fast, quantile_unchecked, std_normal_cdf, std_normal_pdf};

/// Pivots this far below zero are treated as rounding noise and jittered.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Default absolute error target for probability estimates.
pub const DEFAULT_TARGET_ERROR: f64 = 1e-6;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const SHIFTS: usize = 8;
const INITIAL_POINTS: usize = 256;
const MAX_POINTS_PER_SHIFT: usize = 1 << 17;
/// Batches with at least this many coordinate evaluations per shift run
/// the shifts in parallel.
const PARALLEL_WORK: usize = 1 << 14;
/// Reported error is this many standard errors of the shift means.
const ERROR_SIGMAS: f64 = 3.0;

/// Largest dimension integrated with the sin² transform rather than the tent.
const SIDI_MAX_DIM: usize = 6;

/// Points of the embedded lattice are indexed with this many bits.
const LATTICE_BITS: u32 = 20;

/// Leading components of the Cools-Kuo-Nuyens extensible rank-1 lattice in
/// base 2: the first `2^k` points form a lattice rule for every
/// `k <= LATTICE_BITS`.
const LATTICE_GENERATOR: [u64; 24] = [
    1, 182667, 213731, 255351, 96013, 116671, 479315, 424089, 271103, 464421, 124483, 230887, 392877, 162965, 109125,
    168491, 216103, 5613, 207895, 506745, 189519, 114879, 133967, 374257,
];

/// A validated correlation matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validate symmetry, unit diagonal, entry range and positive
    /// semidefiniteness. Matrices whose Cholesky pivots dip below zero by
    /// at most [`PSD_TOLERANCE`] are accepted and jittered at integration time.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCorrelation("dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        for i in 0..dim {
            let d = entries[i * dim + i];
            if (d - 1.0).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidCorrelation(format!("diagonal entry {i} is {d}, not 1")));
            }
            for j in 0..dim {
                let v = entries[i * dim + j];
                if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidCorrelation(format!("entry ({i}, {j}) = {v} outside [-1, 1]")));
                }
                if (v - entries[j * dim + i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidCorrelation(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut entries = entries;
        // symmetrize exactly so downstream code can read either triangle
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
            for j in 0..i {
                let v = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        check_psd(dim, &entries)?;
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// All off-diagonal entries equal to `rho`.
    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let mut entries = vec![rho; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut entries = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                entries.push(self.get(i, j));
            }
        }
        Self { dim: k, entries }
    }

    /// Lower Cholesky factor (row-major), with tiny negative pivots jittered.
    pub fn cholesky(&self) -> Vec<f64> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    l[i * n + i] = s.max(PSD_TOLERANCE).sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        l
    }
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrelationMatrix) -> Self {
        m.rows()
    }
}

fn check_psd(n: usize, a: &[f64]) -> Result<()> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s < -PSD_TOLERANCE {
                    return Err(Error::NotPositiveSemidefinite { row: i, pivot: s });
                }
                l[i * n + i] = s.max(0.0).sqrt();
            } else if l[j * n + j] > 0.0 {
                l[i * n + j] = s / l[j * n + j];
            } else if s.abs() > PSD_TOLERANCE.sqrt() {
                // zero pivot but nonzero coupling: cannot be PSD
                return Err(Error::NotPositiveSemidefinite { row: i, pivot: 0.0 });
            }
        }
    }
    Ok(())
}

/// A probability estimate with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub value: f64,
    pub error: f64,
}

impl ProbEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// `P(lower_j < Z_j <= upper_j for all j)` for `Z ~ N(0, corr)`.
///
/// Bounds may be infinite. Deterministic for a fixed `seed`. When the sample
/// cap is hit before `target_error` is met, the achieved error is reported.
pub fn mvn_rectangle(
    lower: &[f64],
    upper: &[f64],
    corr: &CorrelationMatrix,
    seed: u64,
    target_error: f64,
) -> Result<ProbEstimate> {
    let d = corr.dim();
    if lower.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: lower.len() });
    }
    if upper.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: upper.len() });
    }
    let mut active = Vec::with_capacity(d);
    for j in 0..d {
        let (a, b) = (lower[j], upper[j]);
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::Domain(format!("invalid bounds ({a}, {b}] at index {j}")));
        }
        if a == b {
            return Ok(ProbEstimate::exact(0.0));
        }
        // unconstrained coordinates marginalize out
        if !(a == f64::NEG_INFINITY && b == f64::INFINITY) {
            active.push(j);
        }
    }
    match active.len() {
        0 => Ok(ProbEstimate::exact(1.0)),
        1 => {
            let j = active[0];
            Ok(ProbEstimate::exact(interval_prob(lower[j], upper[j])))
        }
        _ => {
            let sub = corr.submatrix(&active);
            let a: Vec<f64> = active.iter().map(|&j| lower[j]).collect();
            let b: Vec<f64> = active.iter().map(|&j| upper[j]).collect();
            Ok(GenzIntegrand::new(&sub, a, b).integrate(seed, target_error))
        }
    }
}

/// `P(union_j {P_j <= u_j})` for one-sided p-values `P_j = 1 - Φ(Z_j)`.
///
/// Zero thresholds are dropped (probability-zero events); any threshold of 1
/// makes the union certain.
pub fn union_exceedance(
    thresholds: &[f64],
    corr: &CorrelationMatrix,
    seed: u64,
    target_error: f64,
) -> Result<ProbEstimate> {
    let d = corr.dim();
    if thresholds.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: thresholds.len() });
    }
    if let Some(u) = thresholds.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Domain(format!("threshold {u} outside [0, 1]")));
    }
    if thresholds.iter().any(|&u| u >= 1.0) {
        return Ok(ProbEstimate::exact(1.0));
    }
    let active: Vec<usize> = (0..d).filter(|&j| thresholds[j] > 0.0).collect();
    match active.len() {
        0 => Ok(ProbEstimate::exact(0.0)),
        1 => Ok(ProbEstimate::exact(thresholds[active[0]])),
        _ => {
            // P_j > u_j  <=>  Z_j < -Φ⁻¹(u_j)
            let upper: Vec<f64> = active.iter().map(|&j| -quantile_unchecked(thresholds[j])).collect();
            let lower = vec![f64::NEG_INFINITY; active.len()];
            let sub = corr.submatrix(&active);
            let none = GenzIntegrand::new(&sub, lower, upper).integrate(seed, target_error);
            Ok(ProbEstimate { value: (1.0 - none.value).clamp(0.0, 1.0), error: none.error })
        }
    }
}

fn interval_prob(a: f64, b: f64) -> f64 {
    // use the tail that keeps precision
    if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// The transformed integrand after variable reordering.
struct GenzIntegrand {
    dim: usize,
    /// Lower Cholesky factor of the permuted matrix, row-major.
    chol: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GenzIntegrand {
    fn new(corr: &CorrelationMatrix, mut lower: Vec<f64>, mut upper: Vec<f64>) -> Self {
        let n = corr.dim();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = vec![0.0; n * n];
        let mut y = vec![0.0; n];

        for i in 0..n {
            // pick the remaining variable with the smallest conditional
            // interval probability given the expected values so far
            let mut best = i;
            let mut best_prob = f64::INFINITY;
            for j in i..n {
                let mut s = 0.0;
                let mut var = corr.get(perm[j], perm[j]);
                for k in 0..i {
                    s += l[j * n + k] * y[k];
                    var -= l[j * n + k] * l[j * n + k];
                }
                let sd = var.max(PSD_TOLERANCE).sqrt();
                let prob = interval_prob((lower[j] - s) / sd, (upper[j] - s) / sd);
                if prob < best_prob {
                    best_prob = prob;
                    best = j;
                }
            }
            if best != i {
                perm.swap(i, best);
                lower.swap(i, best);
                upper.swap(i, best);
                for k in 0..i {
                    l.swap(i * n + k, best * n + k);
                }
            }

            let mut var = corr.get(perm[i], perm[i]);
            for k in 0..i {
                var -= l[i * n + k] * l[i * n + k];
            }
            let lii = var.max(PSD_TOLERANCE).sqrt();
            l[i * n + i] = lii;
            for j in (i + 1)..n {
                let mut s = corr.get(perm[j], perm[i]);
                for k in 0..i {
                    s -= l[j * n + k] * l[i * n + k];
                }
                l[j * n + i] = s / lii;
            }

            let mut s = 0.0;
            for k in 0..i {
                s += l[i * n + k] * y[k];
            }
            let lo = (lower[i] - s) / lii;
            let hi = (upper[i] - s) / lii;
            let mass = interval_prob(lo, hi);
            y[i] = if mass > 1e-300 {
                (std_normal_pdf(lo) - std_normal_pdf(hi)) / mass
            } else if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
        }
        Self { dim: n, chol: l, lower, upper }
    }

    /// Integrand value at a point of the `(dim - 1)`-cube.
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let n = self.dim;
        let mut f = 1.0;
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i + 1];
            let s: f64 = row[..i].iter().zip(&y[..i]).map(|(l, y)| l * y).sum();
            let lii = row[i];
            let lo = (self.lower[i] - s) / lii;
            let hi = (self.upper[i] - s) / lii;
            let d = if lo == f64::NEG_INFINITY { 0.0 } else { std_normal_cdf(lo) };
            let e = if hi == f64::INFINITY { 1.0 } else { std_normal_cdf(hi) };
            let mass = e - d;
            if mass <= 0.0 {
                return 0.0;
            }
            f *= mass;
            if i + 1 < n {
                y[i] = quantile_fast(d + w[i] * mass).max(lo.max(-40.0)).min(hi.min(40.0));
            }
        }
        f
    }

    fn integrate(&self, seed: u64, target_error: f64) -> ProbEstimate {
        let dim_w = self.dim - 1;
        let generators = &LATTICE_GENERATOR[..dim_w];
        let scale = (1u64 << LATTICE_BITS) as f64;
        let modulus = (1u64 << LATTICE_BITS) - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<Vec<f64>> = (0..SHIFTS).map(|_| (0..dim_w).map(|_| rng.random::<f64>()).collect()).collect();

        let sidi = self.dim <= SIDI_MAX_DIM;
        let shift_sum = |shift: &[f64], range: std::ops::Range<usize>| -> f64 {
            let mut w = vec![0.0; dim_w];
            let mut y = vec![0.0; self.dim];
            let mut sum = 0.0;
            for k in range {
                // radical-inverse ordering keeps every power-of-two prefix a lattice
                let r = (k as u32).reverse_bits() as u64 >> (32 - LATTICE_BITS);
                let mut jac = 1.0;
                for ((wi, g), sh) in w.iter_mut().zip(generators).zip(shift) {
                    let x = (((r * g) & modulus) as f64 / scale + sh).fract();
                    if sidi {
                        let (s2, c2) = (TAU * x).sin_cos();
                        *wi = (x - s2 / TAU).clamp(0.0, 1.0);
                        jac *= 1.0 - c2;
                    } else {
                        *wi = 1.0 - (2.0 * x - 1.0).abs();
                    }
                }
                sum += jac * self.eval(&w, &mut y);
            }
            sum
        };

        let mut sums = [0.0f64; SHIFTS];
        let mut done = 0usize;
        let mut batch_end = INITIAL_POINTS;
        loop {
            // each shift is summed in a fixed order, so threading cannot
            // change the result
            let batch: Vec<f64> = if (batch_end - done) * self.dim >= PARALLEL_WORK {
                shifts.par_iter().map(|sh| shift_sum(sh, done..batch_end)).collect()
            } else {
                shifts.iter().map(|sh| shift_sum(sh, done..batch_end)).collect()
            };
            for (s, b) in sums.iter_mut().zip(batch) {
                *s += b;
            }
            done = batch_end;

            let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
            let mean = means.iter().sum::<f64>() / SHIFTS as f64;
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / ((SHIFTS - 1) * SHIFTS) as f64;
            let error = ERROR_SIGMAS * var.sqrt();
            if error <= target_error || done >= MAX_POINTS_PER_SHIFT {
                return ProbEstimate { value: mean.clamp(0.0, 1.0), error };
            }
            batch_end = (2 * done).min(MAX_POINTS_PER_SHIFT);
        }
    }
}
