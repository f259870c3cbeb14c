use crate::error::{shape_err, Error, Result};

use super::dense::{DenseMatrix, MatrixInput};

/// Compressed sparse row matrix. Explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that sum to zero are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, v) in &sorted {
            if i >= rows || j >= cols {
                return shape_err(format!("entry ({i}, {j}) outside {rows}x{cols}"));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry ({i}, {j})")));
            }
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_of.push(i);
                last = Some((i, j));
            }
        }
        let mut kept_cols = Vec::with_capacity(col_idx.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((j, v), i) in col_idx.into_iter().zip(values).zip(row_of) {
            if v != 0.0 {
                kept_cols.push(j);
                kept_vals.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { rows, cols, row_ptr, col_idx: kept_cols, values: kept_vals })
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..a.rows() {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), &trip).expect("dense entries are finite and in range")
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Number of stored entries in each column.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        counts
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = (0..self.rows).flat_map(|i| self.row_entries(i).map(move |(j, v)| (j, i, v))).collect();
        Self::from_triplets(self.cols, self.rows, &trip).expect("transpose of a valid matrix")
    }

    /// `self * b` with `b` dense; work proportional to `nnz(self) * b.cols`.
    pub fn matmul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows() {
            return shape_err(format!("matmul {}x{} x {:?}", self.rows, self.cols, b.shape()));
        }
        let mut out = DenseMatrix::zeros(self.rows, b.cols());
        for i in 0..self.rows {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            for (&k, &a) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                for (o, &bv) in out.row_mut(i).iter_mut().zip(b.row(k)) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    /// `a * selfᵀ` for dense `a` (used to compress columns of `a`).
    pub fn dense_times_transpose(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.cols() != self.cols {
            return shape_err(format!("{:?} x ({}x{})ᵀ", a.shape(), self.rows, self.cols));
        }
        let mut out = DenseMatrix::zeros(a.rows(), self.rows);
        for r in 0..a.rows() {
            let arow = a.row(r);
            let orow = out.row_mut(r);
            for (i, o) in orow.iter_mut().enumerate() {
                let span = self.row_ptr[i]..self.row_ptr[i + 1];
                *o = self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&j, &v)| v * arow[j]).sum();
            }
        }
        Ok(out)
    }

    /// Structural invariants: monotone row pointers, strictly increasing
    /// in-range columns per row, finite nonzero values.
    pub fn check_invariants(&self) -> bool {
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 || self.row_ptr[self.rows] != self.values.len() {
            return false;
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return false;
        }
        for i in 0..self.rows {
            let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= self.cols) {
                return false;
            }
        }
        self.values.iter().all(|v| v.is_finite() && *v != 0.0)
    }
}

impl MatrixInput for SparseMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }

    fn for_each_in_row(&self, i: usize, f: &mut dyn FnMut(usize, f64)) {
        for (j, v) in self.row_entries(i) {
            f(j, v);
        }
    }

    fn to_dense(&self) -> DenseMatrix {
        SparseMatrix::to_dense(self)
    }
}

/// Dense-or-sparse matrix, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl Matrix {
    pub fn as_input(&self) -> &dyn MatrixInput {
        match self {
            Matrix::Dense(d) => d,
            Matrix::Sparse(s) => s,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.as_input().to_dense()
    }

    pub fn shape(&self) -> (usize, usize) {
        let m = self.as_input();
        (m.n_rows(), m.n_cols())
    }
}

/// `a * b` for dense or sparse `a`.
pub fn matmul(a: &Matrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    match a {
        Matrix::Dense(d) => d.matmul(b),
        Matrix::Sparse(s) => s.matmul_dense(b),
    }
}
