//! Dense row-major f64 matrices and the handful of kernels everything else
//! is built on.
//!
//! All kernels accumulate each output element in a fixed order (ascending
//! inner index), so results are bit-identical across runs and independent of
//! the rayon thread count: parallelism only splits work across output rows,
//! never across a single element's summation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Below this many multiply-adds a matmul stays single-threaded.
const PAR_MATMUL_THRESHOLD: usize = 1 << 18;

/// Register-tile dimensions for the matmul kernel.
const MR: usize = 4;
const NR: usize = 8;

/// Multiply `mr` rows of A (contiguous in `a_rows`) by B into `out_rows`.
/// Full 4x8 tiles keep their accumulators in registers; every element still
/// sums over p in ascending order.
fn row_block_kernel(a_rows: &[f64], mr: usize, k: usize, b: &[f64], n: usize, out_rows: &mut [f64]) {
    let mut j0 = 0;
    while j0 + NR <= n {
        if mr == MR {
            let mut acc = [[0.0f64; NR]; MR];
            for p in 0..k {
                let bs: &[f64] = &b[p * n + j0..p * n + j0 + NR];
                for i in 0..MR {
                    let av = a_rows[i * k + p];
                    for t in 0..NR {
                        acc[i][t] += av * bs[t];
                    }
                }
            }
            for (i, row_acc) in acc.iter().enumerate() {
                out_rows[i * n + j0..i * n + j0 + NR].copy_from_slice(row_acc);
            }
        } else {
            for i in 0..mr {
                let mut acc = [0.0f64; NR];
                for p in 0..k {
                    let av = a_rows[i * k + p];
                    let bs = &b[p * n + j0..p * n + j0 + NR];
                    for t in 0..NR {
                        acc[t] += av * bs[t];
                    }
                }
                out_rows[i * n + j0..i * n + j0 + NR].copy_from_slice(&acc);
            }
        }
        j0 += NR;
    }
    // Remainder columns.
    for i in 0..mr {
        for j in j0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a_rows[i * k + p] * b[p * n + j];
            }
            out_rows[i * n + j] = acc;
        }
    }
}

/// Dense 2-D array of f64, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data; the length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not fill {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build element-wise from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// True when every entry is finite (no NaN/Inf).
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Matrix product; `self.cols` must equal `other.rows`.
    ///
    /// Each output element is the p-ascending sum over the inner dimension,
    /// exactly as the naive triple loop computes it; the register tiling
    /// below only changes which elements are in flight, not any element's
    /// accumulation order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        if m * k * n >= PAR_MATMUL_THRESHOLD && m > MR {
            out.data
                .par_chunks_mut(MR * n)
                .zip(self.data.par_chunks(MR * k))
                .for_each(|(out_rows, a_rows)| {
                    row_block_kernel(a_rows, a_rows.len() / k, k, &other.data, n, out_rows)
                });
        } else {
            for (out_rows, a_rows) in out.data.chunks_mut(MR * n).zip(self.data.chunks(MR * k)) {
                row_block_kernel(a_rows, a_rows.len() / k, k, &other.data, n, out_rows);
            }
        }
        Ok(out)
    }

    /// Elementwise product; shapes must match.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiply every entry by a scalar.
    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    /// Scale row `r` by `factors[r]`; `factors` length must equal the row count.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Matrix> {
        if factors.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "row scaling with {} factors on {} rows",
                factors.len(),
                self.rows
            )));
        }
        let mut out = self.clone();
        for (row, &f) in out.data.chunks_mut(self.cols).zip(factors.iter()) {
            for v in row {
                *v *= f;
            }
        }
        Ok(out)
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Normal(0, sqrt(2 / fan_in)); the usual pick for ReLU layers.
    He,
    /// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)); for tanh layers.
    Xavier,
}

/// Draw a freshly initialized weight matrix. Entries are filled in row-major
/// order so a given stream position always yields the same matrix.
pub fn init_weights(
    rows: usize,
    cols: usize,
    scheme: InitScheme,
    rng: &mut RandomStream,
) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "weight matrix must be non-empty, got {}x{}",
            rows, cols
        )));
    }
    let n = rows * cols;
    let data = match scheme {
        InitScheme::He => {
            let std = (2.0 / cols as f64).sqrt();
            (0..n).map(|_| rng.normal() * std).collect()
        }
        InitScheme::Xavier => {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            (0..n).map(|_| rng.uniform_in(-bound, bound)).collect()
        }
    };
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RandomStream) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(-1.0, 1.0))
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let mut rng = RandomStream::new(7);
        let a = random_matrix(3, 3, &mut rng);
        let c = Matrix::identity(3).matmul(&a).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matmul_zeros_annihilate() {
        let mut rng = RandomStream::new(8);
        let b = random_matrix(3, 4, &mut rng);
        let c = Matrix::zeros(2, 3).matmul(&b).unwrap();
        assert_eq!(c, Matrix::zeros(2, 4));
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let mut rng = RandomStream::new(9);
        let a = random_matrix(5, 7, &mut rng);
        let b = random_matrix(7, 3, &mut rng);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        assert_eq!(fast, slow, "kernel must match the naive product exactly");
    }

    #[test]
    fn matmul_large_matches_naive_with_parallel_path() {
        let mut rng = RandomStream::new(10);
        let a = random_matrix(80, 90, &mut rng);
        let b = random_matrix(90, 70, &mut rng);
        assert!(80 * 90 * 70 >= PAR_MATMUL_THRESHOLD);
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
    }

    #[test]
    fn matmul_shape_mismatch_rejected() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn hadamard_identity_and_zero() {
        let mut rng = RandomStream::new(11);
        let a = random_matrix(4, 5, &mut rng);
        let ones = Matrix::from_fn(4, 5, |_, _| 1.0);
        assert_eq!(a.hadamard(&ones).unwrap(), a);
        assert_eq!(a.hadamard(&Matrix::zeros(4, 5)).unwrap(), Matrix::zeros(4, 5));
    }

    #[test]
    fn hadamard_hand_product() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![2.0, 0.0, 1.0, 1.0]).unwrap();
        let c = a.hadamard(&b).unwrap();
        assert_eq!(c.data(), &[2.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn hadamard_shape_mismatch_rejected() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.hadamard(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = RandomStream::new(12);
        let a = random_matrix(3, 6, &mut rng);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.transpose().get(2, 1), a.get(1, 2));
    }

    #[test]
    fn scale_rows_scales_each_row() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let s = a.scale_rows(&[2.0, 1.0]).unwrap();
        assert_eq!(s.data(), &[2.0, 2.0, 1.0, 1.0]);
        assert!(a.scale_rows(&[1.0]).is_err());
    }

    #[test]
    fn he_init_sample_std() {
        // 1e5 draws land within 2% of sqrt(2/784).
        let mut rng = RandomStream::new(42);
        let w = init_weights(128, 784, InitScheme::He, &mut rng).unwrap();
        let n = w.data().len() as f64;
        assert!(n >= 1e5);
        let mean: f64 = w.data().iter().sum::<f64>() / n;
        let var: f64 = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = (2.0 / 784.0f64).sqrt();
        let ratio = var.sqrt() / target;
        assert!(
            (ratio - 1.0).abs() < 0.02,
            "sample std off: ratio {ratio}"
        );
    }

    #[test]
    fn xavier_init_bounded() {
        let mut rng = RandomStream::new(43);
        let w = init_weights(10, 10, InitScheme::Xavier, &mut rng).unwrap();
        let bound = (6.0 / 20.0f64).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_deterministic_per_seed() {
        let mut a = RandomStream::new(99);
        let mut b = RandomStream::new(99);
        let wa = init_weights(17, 23, InitScheme::He, &mut a).unwrap();
        let wb = init_weights(17, 23, InitScheme::He, &mut b).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn init_rejects_empty_shape() {
        let mut rng = RandomStream::new(1);
        assert!(init_weights(0, 4, InitScheme::He, &mut rng).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(-1.0f64..1.0, rows * cols)
                .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
        }

        proptest! {
            #[test]
            fn matmul_associative_within_tolerance(
                a in small_matrix(4, 3),
                b in small_matrix(3, 5),
                c in small_matrix(5, 2),
            ) {
                let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
                let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
                for (x, y) in left.data().iter().zip(right.data().iter()) {
                    let scale = x.abs().max(y.abs()).max(1.0);
                    prop_assert!((x - y).abs() / scale < 1e-9);
                }
            }

            #[test]
            fn hadamard_commutes_exactly(a in small_matrix(3, 4), b in small_matrix(3, 4)) {
                prop_assert_eq!(a.hadamard(&b).unwrap(), b.hadamard(&a).unwrap());
            }
        }
    }
}
