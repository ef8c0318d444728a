//! Dense real/complex matrices, convolution kernels, discrete Fourier
//! transforms, and the matrix norms used by every estimator.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex64;

/// Row-major dense matrix with `f64` or `Complex64` entries.
///
/// Construction validates that every entry is finite, so downstream
/// operations never have to re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} entries, expected {rows}x{cols} = {}",
                data.len(),
                rows * cols
            )));
        }
        if !data.iter().all(|x| x.is_finite_scalar()) {
            return Err(Error::InvalidArgument(
                "matrix entries must all be finite".to_string(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix entry by entry, validating finiteness afterwards.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.saturating_mul(cols));
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at row `r`, column `c`.
    pub fn at(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: T) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = value;
    }

    /// Row `r` as a contiguous slice.
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Flat row-major view of all entries.
    pub fn entries(&self) -> &[T] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    /// Multiplies every entry by a real factor.
    pub fn scale_in_place(&mut self, factor: f64) {
        for x in &mut self.data {
            *x = x.scale(factor);
        }
    }

    /// Conjugate transpose.
    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            for c in 0..self.cols {
                out.data[c * self.rows + r] = row[c].conj();
            }
        }
        out
    }

    /// Ordinary matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        // Transposing the right factor makes both dot operands contiguous.
        let mut bt = vec![T::zero(); other.rows * other.cols];
        for r in 0..other.rows {
            let row = other.row(r);
            for c in 0..other.cols {
                bt[c * other.rows + r] = row[c];
            }
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            for c in 0..other.cols {
                let b_col = &bt[c * other.rows..(c + 1) * other.rows];
                out.data[r * other.cols + c] = dot_plain(a_row, b_col);
            }
        }
        Ok(out)
    }

    /// Conjugate-transpose product `self^* self`, a Hermitian positive
    /// semidefinite matrix of order `cols`. The result is made exactly
    /// Hermitian by mirroring the upper triangle.
    pub fn gram_product(&self) -> Self {
        let (rows, cols) = (self.rows, self.cols);
        // Rows of the conjugate transpose are the conjugated columns of self.
        let mut ct = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = self.row(r);
            for c in 0..cols {
                ct[c * rows + r] = row[c].conj();
            }
        }
        let mut out = Self::zeros(cols, cols);
        for i in 0..cols {
            let a = &ct[i * rows..(i + 1) * rows];
            for j in i..cols {
                let b = &ct[j * rows..(j + 1) * rows];
                let v = dot_conj(a, b);
                out.data[i * cols + j] = v;
                out.data[j * cols + i] = v.conj();
            }
        }
        out
    }

    /// Square of a Hermitian matrix, exploiting `H^2[i][j] = <row_i, row_j>`.
    /// The result is mirrored to stay exactly Hermitian.
    pub fn hermitian_square(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            let a = self.row(i);
            for j in i..n {
                let b = self.row(j);
                let v = dot_conj(a, b);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v.conj();
            }
        }
        out
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot_plain(self.row(r), x)).collect())
    }

    /// Conjugate-transposed matrix-vector product `self^* y`.
    pub fn conj_transpose_matvec(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "adjoint matvec: matrix has {} rows, vector has {} entries",
                self.rows,
                y.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let yr = y[r];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a.conj() * yr;
            }
        }
        Ok(out)
    }
}

/// Dot product without conjugation, with four-way accumulation so the
/// floating-point order is fixed but not latency-bound.
#[inline]
pub(crate) fn dot_plain<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        acc[0] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Dot product `sum_k a[k] * conj(b[k])`, accumulated like [`dot_plain`].
#[inline]
pub(crate) fn dot_conj<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0].conj();
        acc[1] += ca[1] * cb[1].conj();
        acc[2] += ca[2] * cb[2].conj();
        acc[3] += ca[3] * cb[3].conj();
    }
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        acc[0] += x * y.conj();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Matrix norms with the submultiplicative property required for certified
/// upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixNorm {
    /// Square root of the sum of squared entry moduli.
    Frobenius,
    /// Maximum absolute row sum.
    Inf,
    /// Maximum absolute column sum.
    One,
}

impl MatrixNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixNorm::Frobenius => "frobenius",
            MatrixNorm::Inf => "inf",
            MatrixNorm::One => "one",
        }
    }
}

impl std::str::FromStr for MatrixNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frobenius" | "fro" => Ok(MatrixNorm::Frobenius),
            "inf" => Ok(MatrixNorm::Inf),
            "one" => Ok(MatrixNorm::One),
            other => Err(Error::InvalidArgument(format!(
                "unknown matrix norm '{other}' (expected frobenius, inf, or one)"
            ))),
        }
    }
}

impl std::fmt::Display for MatrixNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Computes the requested norm of a dense matrix.
pub fn matrix_norm<T: Scalar>(m: &DenseMatrix<T>, which: MatrixNorm) -> f64 {
    match which {
        MatrixNorm::Frobenius => m
            .entries()
            .iter()
            .map(|x| x.modulus_sq())
            .sum::<f64>()
            .sqrt(),
        MatrixNorm::Inf => (0..m.rows())
            .map(|r| m.row(r).iter().map(|x| x.modulus()).sum::<f64>())
            .fold(0.0, f64::max),
        MatrixNorm::One => {
            let mut sums = vec![0.0; m.cols()];
            for r in 0..m.rows() {
                for (s, x) in sums.iter_mut().zip(m.row(r)) {
                    *s += x.modulus();
                }
            }
            sums.into_iter().fold(0.0, f64::max)
        }
    }
}

/// Real 2-D convolution filter with layout `(c_out, c_in, k_h, k_w)`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4D {
    c_out: usize,
    c_in: usize,
    k_h: usize,
    k_w: usize,
    data: Vec<f64>,
}

impl Kernel4D {
    /// Builds a kernel from flat row-major data, validating shape and
    /// finiteness.
    pub fn new(c_out: usize, c_in: usize, k_h: usize, k_w: usize, data: Vec<f64>) -> Result<Self> {
        if c_out == 0 || c_in == 0 || k_h == 0 || k_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel dimensions must be positive, got ({c_out}, {c_in}, {k_h}, {k_w})"
            )));
        }
        let expected = c_out * c_in * k_h * k_w;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "kernel data has {} entries, expected {expected}",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(
                "kernel entries must all be finite".to_string(),
            ));
        }
        Ok(Self {
            c_out,
            c_in,
            k_h,
            k_w,
            data,
        })
    }

    /// Builds a kernel entry by entry in `(j, i, a, b)` order.
    pub fn from_fn(
        c_out: usize,
        c_in: usize,
        k_h: usize,
        k_w: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(c_out * c_in * k_h * k_w);
        for j in 0..c_out {
            for i in 0..c_in {
                for a in 0..k_h {
                    for b in 0..k_w {
                        data.push(f(j, i, a, b));
                    }
                }
            }
        }
        Self::new(c_out, c_in, k_h, k_w, data)
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    /// Entry for output channel `j`, input channel `i`, spatial offset
    /// `(a, b)`.
    pub fn at(&self, j: usize, i: usize, a: usize, b: usize) -> f64 {
        debug_assert!(j < self.c_out && i < self.c_in && a < self.k_h && b < self.k_w);
        self.data[((j * self.c_in + i) * self.k_h + a) * self.k_w + b]
    }

    /// Flat row-major view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// The spatial plane for channel pair `(j, i)` as a contiguous slice of
    /// length `k_h * k_w`.
    pub fn plane(&self, j: usize, i: usize) -> &[f64] {
        let start = (j * self.c_in + i) * self.k_h * self.k_w;
        &self.data[start..start + self.k_h * self.k_w]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.c_out,
            self.c_in,
            self.k_h,
            self.k_w,
            self.data.iter().map(|x| x * factor).collect(),
        )
    }
}

/// The `n^2` complex `(c_out, c_in)` frequency blocks of a kernel sampled on
/// the `n x n` Fourier grid, indexed by the frequency pair `(u, v)`.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    n: usize,
    c_out: usize,
    c_in: usize,
    blocks: Vec<DenseMatrix<Complex64>>,
}

impl BlockSpectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    /// Block for frequency pair `(u, v)`, each of shape `(c_out, c_in)`.
    pub fn block(&self, u: usize, v: usize) -> &DenseMatrix<Complex64> {
        debug_assert!(u < self.n && v < self.n);
        &self.blocks[u * self.n + v]
    }

    /// All blocks in row-major `(u, v)` order.
    pub fn blocks(&self) -> &[DenseMatrix<Complex64>] {
        &self.blocks
    }
}

/// Unnormalized discrete Fourier matrix with 0-based indices,
/// `U[u][v] = exp(-2*pi*i*u*v/n)`; satisfies `U * (U^*/n) = I`.
pub fn dft_matrix(n: usize) -> Result<DenseMatrix<Complex64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "DFT matrix size must be at least 1".to_string(),
        ));
    }
    let mut data = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            data.push(unit_root(u * v, n));
        }
    }
    DenseMatrix::new(n, n, data)
}

/// `exp(-2*pi*i*k/n)`, reducing `k` modulo `n` before forming the angle.
fn unit_root(k: usize, n: usize) -> Complex64 {
    let angle = -2.0 * std::f64::consts::PI * ((k % n) as f64) / (n as f64);
    Complex64::from_polar(1.0, angle)
}

/// Samples the kernel's frequency response on the `n x n` Fourier grid:
/// block `(u, v)` equals
/// `sum_{k1, k2} exp(-2*pi*i*k1*u/n) * exp(-2*pi*i*k2*v/n) * K[:, :, k1, k2]`,
/// i.e. the 2-D DFT of the kernel zero-padded to `n x n`.
pub fn fft2_kernel(kernel: &Kernel4D, n: usize) -> Result<BlockSpectrum> {
    if n < kernel.k_h().max(kernel.k_w()) {
        return Err(Error::InvalidArgument(format!(
            "sampling size n={n} is smaller than the kernel spatial size {}x{}",
            kernel.k_h(),
            kernel.k_w()
        )));
    }
    let (c_out, c_in, k_h, k_w) = (kernel.c_out(), kernel.c_in(), kernel.k_h(), kernel.k_w());
    // Phase tables for the two separable 1-D transforms.
    let ph: Vec<Complex64> = (0..n * k_h).map(|uk| unit_root(uk_prod(uk, k_h), n)).collect();
    let pw: Vec<Complex64> = (0..n * k_w).map(|vk| unit_root(uk_prod(vk, k_w), n)).collect();

    let mut blocks = vec![DenseMatrix::<Complex64>::zeros(c_out, c_in); n * n];
    let mut partial = vec![Complex64::new(0.0, 0.0); k_h * n];
    let mut grid = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..c_out {
        for i in 0..c_in {
            let plane = kernel.plane(j, i);
            // partial[k1][v] = sum_{k2} K[j, i, k1, k2] * exp(-2*pi*i*k2*v/n)
            for k1 in 0..k_h {
                for v in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k2 in 0..k_w {
                        acc += pw[v * k_w + k2].scale(plane[k1 * k_w + k2]);
                    }
                    partial[k1 * n + v] = acc;
                }
            }
            // grid[u][v] = sum_{k1} exp(-2*pi*i*k1*u/n) * partial[k1][v]
            for cell in grid.iter_mut() {
                *cell = Complex64::new(0.0, 0.0);
            }
            for u in 0..n {
                for k1 in 0..k_h {
                    let phase = ph[u * k_h + k1];
                    let row = &partial[k1 * n..(k1 + 1) * n];
                    for (g, p) in grid[u * n..(u + 1) * n].iter_mut().zip(row) {
                        *g += phase * p;
                    }
                }
            }
            for (block, value) in blocks.iter_mut().zip(grid.iter()) {
                block.set(j, i, *value);
            }
        }
    }
    Ok(BlockSpectrum {
        n,
        c_out,
        c_in,
        blocks,
    })
}

/// Recovers the product `u * k` from the flattened phase-table index.
fn uk_prod(flat: usize, k_len: usize) -> usize {
    (flat / k_len) * (flat % k_len)
}
