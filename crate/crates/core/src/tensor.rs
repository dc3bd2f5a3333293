//! Dense row-major matrices, a CSR sparse matrix and the handful of kernels the
//! model needs. Everything is generic over [`Real`] so the same code runs in
//! `f32` for training and `f64` for gradient checking.

use std::fmt::{self, Debug};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Result, ShtError};

/// Floating point element type.
pub trait Real:
    Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(6) {
            if r > 0 {
                write!(f, "; ")?;
            }
            let row = self.row(r);
            for (c, v) in row.iter().take(8).enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v:?}")?;
            }
            if row.len() > 8 {
                write!(f, ", ..")?;
            }
        }
        if self.rows > 6 {
            write!(f, "; ..")?;
        }
        write!(f, "]")
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ShtError::ShapeMismatch {
                op: "from_vec",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`DenseMatrix::from_vec`] but also rejects NaN and infinities.
    pub fn checked(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        let m = Self::from_vec(rows, cols, data)?;
        if !m.is_finite() {
            return Err(ShtError::NonFinite { op: "checked" });
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ShtError::ShapeMismatch {
                    op: "from_rows",
                    lhs: (rows.len(), cols),
                    rhs: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same storage, reinterpreted with a new shape of equal size.
    pub fn reshape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return Err(ShtError::ShapeMismatch {
                op: "reshape",
                lhs: (self.rows, self.cols),
                rhs: (rows, cols),
            });
        }
        self.rows = rows;
        self.cols = cols;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(ShtError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Columns `[from, to)` as a new matrix.
    pub fn slice_cols(&self, from: usize, to: usize) -> Result<Self> {
        if from > to || to > self.cols {
            return Err(ShtError::ShapeMismatch {
                op: "slice_cols",
                lhs: self.shape(),
                rhs: (from, to),
            });
        }
        let w = to - from;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[from..to]);
        }
        Self::from_vec(self.rows, w, data)
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(ShtError::ShapeMismatch {
                op: "concat_cols",
                lhs: (rows, parts[0].cols),
                rhs: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

fn check_matmul(op: &'static str, lhs: (usize, usize), rhs: (usize, usize), ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ShtError::ShapeMismatch { op, lhs, rhs })
    }
}

/// `A · B`
pub fn matmul<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_matmul("matmul", a.shape(), b.shape(), a.cols == b.rows)?;
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `Aᵀ · B` without materializing the transpose.
pub fn matmul_tn<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_matmul("matmul_tn", a.shape(), b.shape(), a.rows == b.rows)?;
    let (k, n, m) = (a.rows, a.cols, b.cols);
    let mut out = DenseMatrix::zeros(n, m);
    for p in 0..k {
        let arow = &a.data[p * n..(p + 1) * n];
        let brow = &b.data[p * m..(p + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out.data[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `A · Bᵀ` without materializing the transpose.
pub fn matmul_nt<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_matmul("matmul_nt", a.shape(), b.shape(), a.cols == b.cols)?;
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b.data[j * k..(j + 1) * k];
            out.data[i * m + j] = dot(arow, brow);
        }
    }
    Ok(out)
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Compressed sparse row matrix used for the normalized adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, T)>> = vec![Vec::new(); rows];
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(ShtError::ShapeMismatch {
                    op: "csr_from_triplets",
                    lhs: (rows, cols),
                    rhs: (r, c),
                });
            }
            per_row[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in per_row {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(col, value)` entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, &trip).expect("transpose of valid csr")
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `S · X` for dense `X`.
    pub fn spmm(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != x.rows() {
            return Err(ShtError::ShapeMismatch {
                op: "spmm",
                lhs: (self.rows, self.cols),
                rhs: x.shape(),
            });
        }
        let m = x.cols();
        let mut out = DenseMatrix::zeros(self.rows, m);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, &xv) in orow.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul_is_noop() {
        let a = m(3, 2, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(matmul(&DenseMatrix::identity(3), &a).unwrap(), a);
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.5 - 2.0);
        let b = DenseMatrix::from_fn(4, 5, |r, c| (r as f64 - c as f64).sin());
        let c = DenseMatrix::from_fn(5, 3, |r, c| (r + 2 * c) as f64 * 0.1);
        assert_eq!(matmul_tn(&a, &b).unwrap(), matmul(&a.transpose(), &b).unwrap());
        assert_eq!(matmul_nt(&b, &c.transpose()).unwrap(), matmul(&b, &c).unwrap());
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let err = matmul(&m(2, 3, &[0.; 6]), &m(2, 3, &[0.; 6])).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn checked_rejects_nan() {
        assert!(DenseMatrix::checked(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::checked(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(DenseMatrix::<f64>::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn slice_and_concat_are_inverse() {
        let a = DenseMatrix::from_fn(3, 6, |r, c| (r * 6 + c) as f64);
        let l = a.slice_cols(0, 2).unwrap();
        let r = a.slice_cols(2, 6).unwrap();
        assert_eq!(DenseMatrix::concat_cols(&[&l, &r]).unwrap(), a);
    }

    #[test]
    fn csr_spmm_matches_dense() {
        let trip = vec![(0, 1, 2.0), (1, 0, -1.0), (1, 2, 0.5), (2, 2, 3.0), (0, 1, 1.0)];
        let s = CsrMatrix::from_triplets(3, 3, &trip).unwrap();
        assert_eq!(s.nnz(), 4);
        let x = DenseMatrix::from_fn(3, 2, |r, c| (r + c) as f64);
        let dense = s.to_dense();
        assert_eq!(s.spmm(&x).unwrap(), matmul(&dense, &x).unwrap());
        assert_eq!(s.transpose().to_dense(), dense.transpose());
    }
}
