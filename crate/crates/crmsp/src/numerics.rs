//! Dense row-major matrices, probability vectors, and deterministic
//! random streams. Everything downstream builds on these primitives; all
//! arithmetic is `f64`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Floor applied to log arguments in cross-entropy so a zero probability
/// yields a large finite loss instead of infinity.
pub const LOG_CLAMP: f64 = 1e-12;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Dense row-major matrix of `f64`.
///
/// Entries are finite after construction and after every public operation;
/// constructors reject NaN/Inf input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Matrix::from_vec",
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self (m×k) · other (k×n)`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch {
                context: "Matrix::matmul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            let dst = out.row_mut(i);
            for (k, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let rhs = other.row(k);
                for (d, &r) in dst.iter_mut().zip(rhs) {
                    *d += l * r;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ (k×m) · other (k×n)` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimMismatch {
                context: "Matrix::transpose_matmul",
                expected: self.rows,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let lhs = self.row(k);
            let rhs = other.row(k);
            for (i, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, &r) in dst.iter_mut().zip(rhs) {
                    *d += l * r;
                }
            }
        }
        Ok(out)
    }

    /// `self (m×k) · otherᵀ (n×k)`.
    pub fn matmul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimMismatch {
                context: "Matrix::matmul_transpose",
                expected: self.cols,
                actual: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let lhs = self.row(i);
            let dst = out.row_mut(i);
            for (j, d) in dst.iter_mut().enumerate() {
                let rhs = other.row(j);
                *d = lhs.iter().zip(rhs).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row in place.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) {
        debug_assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (d, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *d += b;
            }
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A normalized discrete distribution: entries are nonnegative and sum to
/// one within [`PROB_SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if !probs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ProbVector::new",
            });
        }
        if let Some((i, &v)) = probs.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeEntry { index: i, value: v });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidValue {
                key: "probs".to_string(),
                message: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(ProbVector(probs))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs at least one class");
        ProbVector(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest entry; ties break toward the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Numerically stable softmax (max-subtracted). Rejects non-finite input.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::DimMismatch {
            context: "softmax",
            expected: 1,
            actual: 0,
        });
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { context: "softmax" });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbVector(exps.into_iter().map(|e| e / sum).collect()))
}

/// Divides each entry by the total. A zero-sum input falls back to the
/// uniform distribution (logged as an anomaly) so downstream consumers
/// never see a degenerate all-zero vector. Negative entries are rejected.
pub fn normalize(values: &[f64]) -> Result<ProbVector> {
    if values.is_empty() {
        return Err(Error::DimMismatch {
            context: "normalize",
            expected: 1,
            actual: 0,
        });
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "normalize",
        });
    }
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeEntry { index: i, value: v });
    }
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        log::warn!("normalize: zero-sum input, falling back to uniform");
        return Ok(ProbVector::uniform(values.len()));
    }
    Ok(ProbVector(values.iter().map(|&v| v / sum).collect()))
}

/// `−ln(predicted[target])`, with the log argument clamped to [`LOG_CLAMP`].
pub fn cross_entropy_class(target: usize, predicted: &ProbVector) -> Result<f64> {
    if target >= predicted.len() {
        return Err(Error::LabelOutOfRange {
            label: target,
            classes: predicted.len(),
        });
    }
    Ok(-predicted.get(target).max(LOG_CLAMP).ln())
}

/// `−Σ target_i · ln(predicted_i)` with clamped logs.
pub fn cross_entropy_dist(target: &ProbVector, predicted: &ProbVector) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::DimMismatch {
            context: "cross_entropy_dist",
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    Ok(target
        .as_slice()
        .iter()
        .zip(predicted.as_slice())
        .map(|(&t, &p)| if t == 0.0 { 0.0 } else { -t * p.max(LOG_CLAMP).ln() })
        .sum())
}

/// Cosine similarity `⟨a,b⟩ / (‖a‖·‖b‖)`. A zero-norm operand yields 0
/// with a warning: a degenerate vector should attract nothing.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            context: "cosine_similarity",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine_similarity: zero-norm operand, returning 0");
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Serializable position of a [`RandomStream`], stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub label: String,
    pub word_pos: u128,
}

/// Deterministic counter-based random stream.
///
/// Streams are derived from a root seed plus a purpose label, so adding a
/// consumer never perturbs another consumer's draws. The uniform and
/// normal transforms are pinned here (rather than delegated to a
/// distributions crate) because checkpoint replay depends on the exact
/// draw sequence.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RandomStream {
            seed,
            label: label.to_string(),
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller; consumes exactly two uniforms.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased uniform integer in `[0, n)` via rejection sampling.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index needs a nonempty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            label: self.label.clone(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(state: &RngState) -> Self {
        let mut stream = RandomStream::new(state.seed, &state.label);
        stream.rng.set_word_pos(state.word_pos);
        stream
    }
}
