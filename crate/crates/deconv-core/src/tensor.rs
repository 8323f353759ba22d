//! Dense row-major tensors and the matrix kernels everything else builds on.
//!
//! Determinism contract: every kernel accumulates each output element in a
//! fixed order that does not depend on the number of worker threads. Plain
//! matmul owns each output row in exactly one task, and the transposed-product
//! kernel reduces a fixed number of row partitions in a fixed order, so
//! results are bit-identical across runs and across thread counts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Work threshold (in multiply-adds) below which kernels stay single-threaded.
const PAR_WORK_THRESHOLD: usize = 1 << 17;
/// Output rows handed to one matmul task.
const ROWS_PER_TASK: usize = 32;
/// Fixed partition count for the transposed-product reduction. A function of
/// the shape only, never of the thread count.
const TN_PARTITIONS: usize = 8;
/// Rows of the left operand processed per cache block in the transposed
/// product.
const TN_BLOCK: usize = 64;

/// Dense n-dimensional array, row-major with the last axis contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from a shape and flat data; the element count must match
    /// and every dimension must be positive.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::EmptyShape { shape });
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::EmptyShape { shape });
        }
        Ok(Tensor {
            shape,
            data: vec![T::zero(); len],
        })
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    /// d×d identity matrix.
    pub fn identity(d: usize) -> Self {
        let mut data = vec![T::zero(); d * d];
        for i in 0..d {
            data[i * d + i] = T::one();
        }
        Tensor {
            shape: vec![d, d],
            data,
        }
    }

    /// I.i.d. standard normal draws from the seeded stream.
    pub fn randn(shape: Vec<usize>, rng: &mut Rng) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        for v in &mut t.data {
            *v = T::from_f64(rng.next_normal());
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the flat data under a new shape of equal element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::EmptyShape { shape });
        }
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::RankMismatch {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::RankMismatch {
                op,
                expected: 4,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let n = self.shape[self.rank() - 1];
        &self.data[i * n..(i + 1) * n]
    }

    /// Standard matrix product, deterministic accumulation order in `k`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        if m * k * n >= PAR_WORK_THRESHOLD && m > 1 {
            out.par_chunks_mut(ROWS_PER_TASK * n)
                .zip(self.data.par_chunks(ROWS_PER_TASK * k))
                .for_each(|(c_block, a_block)| gemm_rows(a_block, &rhs.data, c_block, k, n));
        } else {
            gemm_rows(&self.data, &rhs.data, &mut out, k, n);
        }
        Tensor::new(vec![m, n], out)
    }

    /// `selfᵀ · rhs` for two matrices with the same row count, computed
    /// without materializing the transpose.
    pub fn matmul_tn(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, ka) = self.dims2("matmul_tn")?;
        let (m2, n) = rhs.dims2("matmul_tn")?;
        if m != m2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        // Partition count depends on the shape only so the reduction order is
        // reproducible no matter how many threads execute it.
        let parts = if m * ka * n >= PAR_WORK_THRESHOLD && m >= 2 * TN_BLOCK {
            TN_PARTITIONS.min(m.div_ceil(TN_BLOCK))
        } else {
            1
        };
        let rows_per = m.div_ceil(parts);
        let mut partials: Vec<Vec<T>> = (0..parts)
            .into_par_iter()
            .map(|p| {
                let lo = p * rows_per;
                let hi = m.min(lo + rows_per);
                let mut c = vec![T::zero(); ka * n];
                tn_accumulate(&self.data, &rhs.data, &mut c, lo, hi, ka, n);
                c
            })
            .collect();
        let mut out = partials.remove(0);
        for part in &partials {
            for (o, p) in out.iter_mut().zip(part.iter()) {
                *o += *p;
            }
        }
        Tensor::new(vec![ka, n], out)
    }

    /// Matrix transpose (rank 2 only).
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            for (j, &v) in row.iter().enumerate() {
                out[j * m + i] = v;
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Column sums of a rank-2 tensor.
    pub fn col_sums(&self) -> Result<Tensor<T>> {
        let (m, n) = self.dims2("col_sums")?;
        let mut out = vec![T::zero(); n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        Tensor::new(vec![n], out)
    }

    /// Column means of a rank-2 tensor.
    pub fn col_means(&self) -> Result<Tensor<T>> {
        let (m, _) = self.dims2("col_means")?;
        let mut sums = self.col_sums()?;
        let inv = T::one() / T::from_usize(m);
        for v in sums.data_mut() {
            *v *= inv;
        }
        Ok(sums)
    }

    /// Elementwise `self += rhs`.
    pub fn add_assign(&mut self, rhs: &Tensor<T>) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op: "add_assign",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        Ok(())
    }

    /// Elementwise `self += alpha * rhs`.
    pub fn axpy_assign(&mut self, alpha: T, rhs: &Tensor<T>) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op: "axpy_assign",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a + alpha * *b;
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, alpha: T) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Sum of the diagonal of a square matrix.
    pub fn trace(&self) -> Result<T> {
        let (m, n) = self.dims2("trace")?;
        if m != n {
            return Err(Error::ShapeMismatch {
                op: "trace",
                left: self.shape.clone(),
                right: self.shape.clone(),
            });
        }
        Ok((0..m).map(|i| self.data[i * n + i]).fold(T::zero(), |a, v| a + v))
    }

    /// Add `value` to every diagonal element of a square matrix.
    pub fn add_diagonal(&mut self, value: T) -> Result<()> {
        let (m, n) = self.dims2("add_diagonal")?;
        if m != n {
            return Err(Error::ShapeMismatch {
                op: "add_diagonal",
                left: self.shape.clone(),
                right: self.shape.clone(),
            });
        }
        for i in 0..m {
            self.data[i * n + i] += value;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt()
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, rhs: &Tensor<T>) -> Result<T> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), |acc, v| acc.max(v)))
    }
}

/// Row-blocked matmul body: each output row accumulates strictly in ascending
/// `k`, four terms per pass. Two output rows share each pass so the streamed
/// rows of `b` are loaded once per pair.
fn gemm_rows<T: Scalar>(a: &[T], b: &[T], c: &mut [T], k: usize, n: usize) {
    let m = c.len() / n;
    let mut i = 0;
    while i + 2 <= m {
        let (c0, rest) = c[i * n..].split_at_mut(n);
        let c1 = &mut rest[..n];
        let a0_row = &a[i * k..][..k];
        let a1_row = &a[(i + 1) * k..][..k];
        gemm_two_rows(a0_row, a1_row, b, c0, c1, k, n);
        i += 2;
    }
    if i < m {
        gemm_one_row(&a[i * k..][..k], b, &mut c[i * n..][..n], k, n);
    }
}

fn gemm_two_rows<T: Scalar>(a0: &[T], a1: &[T], b: &[T], c0: &mut [T], c1: &mut [T], k: usize, n: usize) {
    let mut kk = 0;
    while kk + 4 <= k {
        let (x0, x1, x2, x3) = (a0[kk], a0[kk + 1], a0[kk + 2], a0[kk + 3]);
        let (y0, y1, y2, y3) = (a1[kk], a1[kk + 1], a1[kk + 2], a1[kk + 3]);
        let b0 = &b[kk * n..][..n];
        let b1 = &b[(kk + 1) * n..][..n];
        let b2 = &b[(kk + 2) * n..][..n];
        let b3 = &b[(kk + 3) * n..][..n];
        for j in 0..n {
            c0[j] = c0[j] + x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
            c1[j] = c1[j] + y0 * b0[j] + y1 * b1[j] + y2 * b2[j] + y3 * b3[j];
        }
        kk += 4;
    }
    while kk < k {
        let x = a0[kk];
        let y = a1[kk];
        let bk = &b[kk * n..][..n];
        for j in 0..n {
            c0[j] = c0[j] + x * bk[j];
            c1[j] = c1[j] + y * bk[j];
        }
        kk += 1;
    }
}

fn gemm_one_row<T: Scalar>(a_row: &[T], b: &[T], c_row: &mut [T], k: usize, n: usize) {
    let mut kk = 0;
    while kk + 4 <= k {
        let (x0, x1, x2, x3) = (a_row[kk], a_row[kk + 1], a_row[kk + 2], a_row[kk + 3]);
        let b0 = &b[kk * n..][..n];
        let b1 = &b[(kk + 1) * n..][..n];
        let b2 = &b[(kk + 2) * n..][..n];
        let b3 = &b[(kk + 3) * n..][..n];
        for j in 0..n {
            c_row[j] = c_row[j] + x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
        }
        kk += 4;
    }
    while kk < k {
        let x = a_row[kk];
        let bk = &b[kk * n..][..n];
        for j in 0..n {
            c_row[j] = c_row[j] + x * bk[j];
        }
        kk += 1;
    }
}

/// Accumulate `a[lo..hi]ᵀ · b[lo..hi]` into `c`, blocking over input rows for
/// cache reuse. Per output element the row order is strictly ascending.
fn tn_accumulate<T: Scalar>(a: &[T], b: &[T], c: &mut [T], lo: usize, hi: usize, ka: usize, n: usize) {
    let mut block_lo = lo;
    while block_lo < hi {
        let block_hi = hi.min(block_lo + TN_BLOCK);
        for (k1, c_row) in c.chunks_exact_mut(n).enumerate() {
            for i in block_lo..block_hi {
                let x = a[i * ka + k1];
                let b_row = &b[i * n..][..n];
                for j in 0..n {
                    c_row[j] = c_row[j] + x * b_row[j];
                }
            }
        }
        block_lo = block_hi;
    }
}
