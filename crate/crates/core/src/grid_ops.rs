//! Complex vector and matrix primitives shared by the rest of the crate.
//!
//! Conventions used throughout:
//!
//! * A delay-Doppler grid `X` is `M x N` (delay bins by Doppler bins) and is
//!   vectorized column-major, so element `n` of `vec(X)` is
//!   `X[n mod M, n / M]`. Consequently an `MN x MN` channel matrix splits into
//!   `N x N` blocks of size `M x M`, block `(i, j)` coupling Doppler bin `j` to
//!   Doppler bin `i`.
//! * Every DFT is unitary (`1/sqrt(len)` per transform). `F_N` has entries
//!   `exp(-j 2 pi l k / N) / sqrt(N)`.
//! * The time-frequency (TF) domain is reached with `(F_N ⊗ F_M)`, applied
//!   without materializing it: an `M`-point DFT down each column of the grid
//!   and an `N`-point DFT along each row.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, OtfsError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance used when asserting a structure tag at construction.
pub const STRUCTURE_TOL: f64 = 1e-9;

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `sum conj(a[i]) * b[i]`
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// An `M x N` delay-Doppler grid, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DdGrid {
    m: usize,
    n: usize,
    values: Vec<C64>,
}

impl DdGrid {
    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(OtfsError::Config(format!("grid must be non-empty, got {m}x{n}")));
        }
        Ok(Self { m, n, values: vec![ZERO; m * n] })
    }

    /// Builds a grid from `f(delay, doppler)`.
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let mut grid = Self::zeros(m, n)?;
        for l in 0..n {
            for k in 0..m {
                grid.values[l * m + k] = f(k, l);
            }
        }
        Ok(grid)
    }

    /// Builds a grid from row-major nested rows (one row per delay bin).
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(OtfsError::Config("ragged grid rows".into()));
        }
        Self::from_fn(m, n, |k, l| rows[k][l])
    }

    pub fn delay_bins(&self) -> usize {
        self.m
    }

    pub fn doppler_bins(&self) -> usize {
        self.n
    }

    pub fn get(&self, delay: usize, doppler: usize) -> C64 {
        self.values[doppler * self.m + delay]
    }

    pub fn set(&mut self, delay: usize, doppler: usize, value: C64) {
        self.values[doppler * self.m + delay] = value;
    }

    /// `vec(X)`: columns stacked, delay index fastest.
    pub fn vectorize(&self) -> Vec<C64> {
        self.values.clone()
    }

    pub fn devectorize(m: usize, n: usize, v: &[C64]) -> Result<Self> {
        check_len(m * n, v.len())?;
        let mut grid = Self::zeros(m, n)?;
        grid.values.copy_from_slice(v);
        Ok(grid)
    }
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix({}x{})", self.rows, self.cols)
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-ONE))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Structural claim carried by a [`BlockMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    Dense,
    /// Nonzero only on block-diagonals at cyclic block offsets in
    /// `{-bandwidth, ..., +bandwidth} mod N`.
    BlockBanded {
        bandwidth: usize,
    },
    /// Block `(i, j)` depends only on `(i - j) mod N`.
    BlockCirculant,
    /// Block circulant with circulant `M x M` blocks.
    Bccb,
    BlockDiagonal,
}

impl Structure {
    fn name(self) -> &'static str {
        match self {
            Structure::Dense => "dense",
            Structure::BlockBanded { .. } => "block-banded",
            Structure::BlockCirculant => "block-circulant",
            Structure::Bccb => "BCCB",
            Structure::BlockDiagonal => "block-diagonal",
        }
    }
}

/// Cyclic block offset `(i - j) mod n`.
#[inline]
pub fn block_offset(i: usize, j: usize, n: usize) -> usize {
    (i + n - j) % n
}

/// True when cyclic block offset `d` lies within `{-b..=b} mod n`.
#[inline]
pub fn offset_in_band(d: usize, b: usize, n: usize) -> bool {
    d <= b || d >= n - b
}

/// An `MN x MN` matrix made of `N x N` blocks of size `M x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    mat: CMatrix,
    m: usize,
    n: usize,
    structure: Structure,
}

impl BlockMatrix {
    /// Wraps `mat`, verifying the claimed structure.
    pub fn new(mat: CMatrix, m: usize, n: usize, structure: Structure) -> Result<Self> {
        check_len(m * n, mat.rows())?;
        check_len(m * n, mat.cols())?;
        let bm = Self {
            mat,
            m,
            n,
            structure: Structure::Dense,
        };
        if !bm.check(structure, STRUCTURE_TOL) {
            return Err(OtfsError::Structure(structure.name()));
        }
        Ok(Self { structure, ..bm })
    }

    pub fn dense(mat: CMatrix, m: usize, n: usize) -> Result<Self> {
        Self::new(mat, m, n, Structure::Dense)
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            mat: CMatrix::identity(m * n),
            m,
            n,
            structure: Structure::Bccb,
        }
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn block_count(&self) -> usize {
        self.n
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn block(&self, i: usize, j: usize) -> CMatrix {
        let m = self.m;
        CMatrix::from_fn(m, m, |r, c| self.mat[(i * m + r, j * m + c)])
    }

    /// Re-checks a structural claim against the stored entries, with `tol`
    /// relative to the largest entry magnitude.
    pub fn check(&self, structure: Structure, tol: f64) -> bool {
        let (m, n) = (self.m, self.n);
        let thresh = tol * self.mat.max_abs().max(f64::MIN_POSITIVE);
        let size = m * n;
        let close = |a: C64, b: C64| (a - b).norm() <= thresh;
        match structure {
            Structure::Dense => true,
            Structure::BlockBanded { bandwidth } => {
                (0..size).all(|r| (0..size).all(|c| offset_in_band(block_offset(r / m, c / m, n), bandwidth, n) || self.mat[(r, c)].norm() <= thresh))
            }
            Structure::BlockDiagonal => (0..size).all(|r| (0..size).all(|c| r / m == c / m || self.mat[(r, c)].norm() <= thresh)),
            Structure::BlockCirculant => (0..size).all(|r| {
                (0..size).all(|c| {
                    let d = block_offset(r / m, c / m, n);
                    close(self.mat[(r, c)], self.mat[(d * m + r % m, c % m)])
                })
            }),
            Structure::Bccb => (0..size).all(|r| {
                (0..size).all(|c| {
                    let d = block_offset(r / m, c / m, n);
                    let delta = block_offset(r % m, c % m, m);
                    close(self.mat[(r, c)], self.mat[(d * m + delta, 0)])
                })
            }),
        }
    }

    /// CSR copy with exact zeros dropped.
    pub fn to_sparse(&self) -> SparseMatrix {
        SparseMatrix::from_dense(&self.mat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary Kronecker DFT `(F_N ⊗ F_M)` and its two factors, acting on
/// column-major `M x N` vectors.
#[derive(Clone)]
pub struct KronDft {
    m: usize,
    n: usize,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for KronDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KronDft(M={}, N={})", self.m, self.n)
    }
}

impl KronDft {
    pub fn new(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            n,
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
        }
    }

    pub fn delay_bins(&self) -> usize {
        self.m
    }

    pub fn doppler_bins(&self) -> usize {
        self.n
    }

    /// `(F_N ⊗ F_M) v` or its Hermitian.
    pub fn apply(&self, v: &[C64], dir: Direction) -> Result<Vec<C64>> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out, dir)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, v: &mut [C64], dir: Direction) -> Result<()> {
        self.apply_delay_in_place(v, dir)?;
        self.apply_doppler_in_place(v, dir)
    }

    /// `(I_N ⊗ F_M) v`: an `M`-point DFT down every grid column.
    pub fn apply_delay_in_place(&self, v: &mut [C64], dir: Direction) -> Result<()> {
        check_len(self.m * self.n, v.len())?;
        let fft = match dir {
            Direction::Forward => &self.fwd_m,
            Direction::Inverse => &self.inv_m,
        };
        fft.process(v);
        let scale = 1.0 / (self.m as f64).sqrt();
        v.iter_mut().for_each(|z| *z *= scale);
        Ok(())
    }

    /// `(F_N ⊗ I_M) v`: an `N`-point DFT along every grid row.
    pub fn apply_doppler_in_place(&self, v: &mut [C64], dir: Direction) -> Result<()> {
        let (m, n) = (self.m, self.n);
        check_len(m * n, v.len())?;
        let fft = match dir {
            Direction::Forward => &self.fwd_n,
            Direction::Inverse => &self.inv_n,
        };
        // Transpose so each row is contiguous, transform, transpose back.
        let mut rows = vec![ZERO; m * n];
        for l in 0..n {
            for k in 0..m {
                rows[k * n + l] = v[l * m + k];
            }
        }
        fft.process(&mut rows);
        let scale = 1.0 / (n as f64).sqrt();
        for l in 0..n {
            for k in 0..m {
                v[l * m + k] = rows[k * n + l] * scale;
            }
        }
        Ok(())
    }
}

/// One-shot `(F_N ⊗ F_M)` application; prefer a cached [`KronDft`] in loops.
pub fn kron_dft_apply(v: &[C64], m: usize, n: usize, dir: Direction) -> Result<Vec<C64>> {
    check_len(m * n, v.len())?;
    KronDft::new(m, n).apply(v, dir)
}

/// Diagonal of `(F_N ⊗ F_M) H (F_N ⊗ F_M)^H` for a BCCB matrix, from the
/// 2-D DFT of its first column.
pub fn bccb_to_tf_diagonal(h: &BlockMatrix) -> Result<Vec<C64>> {
    if h.structure() != Structure::Bccb || !h.check(Structure::Bccb, STRUCTURE_TOL) {
        return Err(OtfsError::Structure("BCCB"));
    }
    let (m, n) = (h.block_size(), h.block_count());
    Ok(spectrum_of_generator(h.matrix().column(0), m, n))
}

/// TF spectrum of the nearest (Frobenius) BCCB matrix to `h`, i.e. the
/// diagonal of `(F_N ⊗ F_M) H (F_N ⊗ F_M)^H`. Each generating coefficient is
/// the mean of the entries sharing its block offset and intra-block offset.
pub fn bccb_projection_spectrum(h: &SparseMatrix, m: usize, n: usize) -> Result<Vec<C64>> {
    check_len(m * n, h.rows())?;
    check_len(m * n, h.cols())?;
    let mut generator = vec![ZERO; m * n];
    for (r, c, v) in h.triplets() {
        let d = block_offset(r / m, c / m, n);
        let delta = block_offset(r % m, c % m, m);
        generator[d * m + delta] += v;
    }
    let inv = 1.0 / (m * n) as f64;
    generator.iter_mut().for_each(|g| *g *= inv);
    Ok(spectrum_of_generator(generator, m, n))
}

fn spectrum_of_generator(mut first_column: Vec<C64>, m: usize, n: usize) -> Vec<C64> {
    KronDft::new(m, n).apply_in_place(&mut first_column, Direction::Forward).expect("generator length is MN");
    let scale = ((m * n) as f64).sqrt();
    first_column.iter_mut().for_each(|z| *z *= scale);
    first_column
}

/// Matrix-free operator interface used by the Krylov equalizer.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[C64], out: &mut [C64]);
    /// `out = A^H y`
    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]);
}

/// Compressed sparse row complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn from_dense(mat: &CMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(mat.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..mat.rows() {
            for (c, v) in mat.row(r).iter().enumerate() {
                if *v != ZERO {
                    col_idx.push(c);
                    values.push(*v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: mat.rows(),
            cols: mat.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row_entries(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] += v;
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.rows];
        self.apply(x, &mut out);
        out
    }
}

impl LinearOperator for SparseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *o = self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&c, v)| v * x[c]).sum();
        }
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        debug_assert_eq!(y.len(), self.rows);
        out.iter_mut().for_each(|o| *o = ZERO);
        for (r, yr) in y.iter().enumerate() {
            for (c, v) in self.row_entries(r) {
                out[c] += v.conj() * yr;
            }
        }
    }
}

impl LinearOperator for CMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * yr;
            }
        }
    }
}
