//! Deterministic numeric primitives: dense row-major matrices, a seeded
//! counter-based random generator, and stable reductions.
//!
//! Everything here is 64-bit and single-threaded with a fixed summation
//! order (row-major, left-to-right), so identical inputs produce
//! bit-identical outputs across runs and platforms.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "matrix entries".into(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Config("ragged rows in matrix".into()));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Entry-wise sum of two equally shaped matrices.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Standard matrix product with deterministic left-to-right inner summation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.cols {
            let mut acc = 0.0;
            for (k, &av) in arow.iter().enumerate() {
                acc += av * b.data[k * b.cols + j];
            }
            out.data[i * b.cols + j] = acc;
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite {
            what: "matmul output".into(),
        });
    }
    Ok(out)
}

/// Rescales every row to Euclidean norm 1, preserving direction.
pub fn row_l2_normalize(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows {
        let norm = row_norm(m.row(i));
        if norm < 1e-30 {
            return Err(Error::DegenerateRow { row: i, norm });
        }
        for j in 0..m.cols {
            out.data[i * m.cols + j] /= norm;
        }
    }
    Ok(out)
}

pub fn row_norm(row: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in row {
        acc += v * v;
    }
    acc.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// log(sum(exp(v))) by max-shift. Tolerates `-inf` entries (zero weight).
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput { what: "logsumexp" });
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut acc = 0.0;
    for &x in v {
        acc += (x - max).exp();
    }
    Ok(max + acc.ln())
}

/// Mean and population standard deviation (divide-by-N form).
pub fn mean_std_population(v: &[f64]) -> Result<(f64, f64)> {
    if v.is_empty() {
        return Err(Error::EmptyInput {
            what: "mean_std_population",
        });
    }
    let n = v.len() as f64;
    let mut sum = 0.0;
    for &x in v {
        sum += x;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &x in v {
        let d = x - mean;
        sq += d * d;
    }
    Ok((mean, (sq / n).sqrt()))
}

/// Seeded deterministic generator (SplitMix64).
///
/// The algorithm is part of the external data contract: datasets generated
/// from a seed must be reproducible from any implementation of the same
/// constants. The state advances by the 64-bit golden-ratio increment
/// 0x9E3779B97F4A7C15 and each output is the finalizer
/// `z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB; z ^= z>>31`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    seed: u64,
    state: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in (0, 1]; safe as a log argument.
    pub fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller (cosine branch, two draws per call).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    pub fn next_range(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_range needs n > 0");
        let n64 = n as u64;
        let limit = u64::MAX - (u64::MAX % n64);
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n64) as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_range(i + 1);
            slice.swap(i, j);
        }
    }

    /// Derives an independent child generator for stream `stream`.
    /// Child seed = mix64(seed XOR (stream+1)*GOLDEN), so children of one
    /// seed never collide with the parent stream.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(mix64(
            self.seed ^ stream.wrapping_add(1).wrapping_mul(GOLDEN),
        ))
    }
}
