use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
///
/// Column vectors are `m x 1` matrices and row vectors `1 x m`; zero-sized
/// dimensions are allowed so that empty sensor or compensator states compose
/// through block assembly without special cases.
///
/// Arithmetic operators panic on shape mismatch. Constructors that take
/// external data validate it and return [`Error`] instead.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_diag(diag: &[S]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn column(entries: &[S]) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    pub fn row(entries: &[S]) -> Self {
        Self {
            rows: 1,
            cols: entries.len(),
            data: entries.to_vec(),
        }
    }

    pub fn scalar(x: S) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    /// Assembles a block matrix. Every block in a block-row must share a row
    /// count and every block in a block-column a column count.
    pub fn from_blocks(blocks: &[Vec<&Matrix<S>>]) -> Result<Self> {
        let n_block_cols = blocks.first().map_or(0, Vec::len);
        if blocks.iter().any(|r| r.len() != n_block_cols) {
            return Err(Error::DimensionMismatch("ragged block rows".into()));
        }
        let row_heights: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let col_widths: Vec<usize> = (0..n_block_cols).map(|j| blocks[0][j].cols).collect();
        for (bi, brow) in blocks.iter().enumerate() {
            for (bj, blk) in brow.iter().enumerate() {
                if blk.rows != row_heights[bi] || blk.cols != col_widths[bj] {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({bi},{bj}) is {}x{}, expected {}x{}",
                        blk.rows, blk.cols, row_heights[bi], col_widths[bj]
                    )));
                }
            }
        }
        let rows: usize = row_heights.iter().sum();
        let cols: usize = col_widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, blk) in brow.iter().enumerate() {
                out.set_block(r0, c0, blk);
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        Ok(out)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NonSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[S]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: S) -> Self {
        self.map(|x| x * s)
    }

    /// `(M + M^T) / 2`.
    pub fn symmetric_part(&self) -> Self {
        let half = S::lit(0.5);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        out
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> S {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<S>())
            .fold(S::zero(), S::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> S {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|r| r.iter().map(|x| x.abs()).sum::<S>())
            .fold(S::zero(), S::max)
    }

    pub fn norm_fro(&self) -> S {
        self.data.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().map(|x| x.abs()).fold(S::zero(), S::max)
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, blk: &Matrix<S>) {
        assert!(
            r0 + blk.rows <= self.rows && c0 + blk.cols <= self.cols,
            "block out of range"
        );
        for i in 0..blk.rows {
            for j in 0..blk.cols {
                self[(r0 + i, c0 + j)] = blk[(i, j)];
            }
        }
    }

    /// Scalar value of a `1 x 1` matrix.
    pub fn as_scalar(&self) -> S {
        assert!(self.rows == 1 && self.cols == 1, "not a 1x1 matrix");
        self.data[0]
    }

    /// Inner product of two vectors of equal length (either orientation).
    pub fn dot(&self, other: &Matrix<S>) -> S {
        assert_eq!(self.data.len(), other.data.len(), "dot: length mismatch");
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    /// `v^T M v` for a column or row vector `v`.
    pub fn quad_form(&self, v: &[S]) -> S {
        assert!(self.is_square() && v.len() == self.rows, "quad_form: shape mismatch");
        let n = self.rows;
        let mut acc = S::zero();
        for i in 0..n {
            let mut row = S::zero();
            for j in 0..n {
                row = row + self.data[i * n + j] * v[j];
            }
            acc = acc + v[i] * row;
        }
        acc
    }

    pub fn add_identity(&self, s: S) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] = out[(i, i)] + s;
        }
        out
    }

    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| T::lit(x.as_f64())).collect(),
        }
    }
}

impl<S: Scalar> Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Scalar> Mul for &Matrix<S> {
    type Output = Matrix<S>;

    fn mul(self, rhs: &Matrix<S>) -> Matrix<S> {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == S::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] = out.data[i * rhs.cols + j] + a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }
}

impl<S: Scalar> Mul<S> for &Matrix<S> {
    type Output = Matrix<S>;

    fn mul(self, rhs: S) -> Matrix<S> {
        self.scale(rhs)
    }
}

impl<S: Scalar> Add for &Matrix<S> {
    type Output = Matrix<S>;

    fn add(self, rhs: &Matrix<S>) -> Matrix<S> {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<S: Scalar> Sub for &Matrix<S> {
    type Output = Matrix<S>;

    fn sub(self, rhs: &Matrix<S>) -> Matrix<S> {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl<S: Scalar> AddAssign<&Matrix<S>> for Matrix<S> {
    fn add_assign(&mut self, rhs: &Matrix<S>) {
        assert!(self.rows == rhs.rows && self.cols == rhs.cols, "add: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a + b;
        }
    }
}

impl<S: Scalar> SubAssign<&Matrix<S>> for Matrix<S> {
    fn sub_assign(&mut self, rhs: &Matrix<S>) {
        assert!(self.rows == rhs.rows && self.cols == rhs.cols, "sub: shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a - b;
        }
    }
}

impl<S: Scalar> Neg for &Matrix<S> {
    type Output = Matrix<S>;

    fn neg(self) -> Matrix<S> {
        self.map(|x| -x)
    }
}

impl<S: fmt::Debug> fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}", self.rows, self.cols)?;
        let cols = self.cols.max(1);
        f.debug_list().entries(self.data.chunks(cols).take(self.rows)).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_with_empty_dimensions() {
        let a = Matrix::<f64>::identity(2);
        let e = Matrix::<f64>::zeros(2, 0);
        let e2 = Matrix::<f64>::zeros(0, 0);
        let et = Matrix::<f64>::zeros(0, 2);
        let m = Matrix::from_blocks(&[vec![&a, &e], vec![&et, &e2]]).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m, a);
    }

    #[test]
    fn ragged_input_rejected() {
        assert!(Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Matrix::<f64>::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::<f64>::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn products_and_norms() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = &a * &a.transpose();
        assert_eq!(b.to_rows(), vec![vec![5.0, 11.0], vec![11.0, 25.0]]);
        assert_eq!(a.norm_one(), 6.0);
        assert_eq!(a.norm_inf(), 7.0);
        assert_eq!(a.trace(), 5.0);
        assert_eq!(a.quad_form(&[1.0, 1.0]), 10.0);
    }
}
