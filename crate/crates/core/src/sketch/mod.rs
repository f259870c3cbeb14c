//! Seeded linear sketch operators applied by left multiplication.

mod hadamard;
mod osnap;

pub use hadamard::{fwht, fwht_in_place, hadamard_entry, StackedSrht};
pub use osnap::Osnap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, MatrixInput};
use crate::rng::{self, Module};

/// Row sampler: output row `r` is input row `indices[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSample {
    pub(crate) source_rows: usize,
    pub(crate) indices: Vec<usize>,
    pub(crate) replacement: bool,
}

impl UniformSample {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn with_replacement(&self) -> bool {
        self.replacement
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchKind {
    Osnap(Osnap),
    StackedSrht(StackedSrht),
    UniformSample(UniformSample),
    DiagonalWeights(Vec<f64>),
    /// Applied left to right: the first operator acts on the input.
    Composite(Vec<SketchOperator>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    pub kind: SketchKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
}

impl SketchOperator {
    pub fn name(&self) -> &'static str {
        match self.kind {
            SketchKind::Osnap(_) => "osnap",
            SketchKind::StackedSrht(_) => "stacked_srht",
            SketchKind::UniformSample(_) => "uniform_sample",
            SketchKind::DiagonalWeights(_) => "diagonal_weights",
            SketchKind::Composite(_) => "composite",
        }
    }

    pub fn identity(n: usize) -> Self {
        diagonal_weights(vec![1.0; n])
    }

    /// Operators of a composite in application order; a single-element slice otherwise.
    pub fn stages(&self) -> Vec<&SketchOperator> {
        match &self.kind {
            SketchKind::Composite(ops) => ops.iter().flat_map(|o| o.stages()).collect(),
            _ => vec![self],
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!("{} expects length {}, got {}", self.name(), self.in_dim, x.len())));
        }
        Ok(apply_sketch(self, &DenseMatrix::column(x))?.into_data())
    }

    /// Explicit `out_dim x in_dim` matrix.
    pub fn materialize(&self) -> Result<DenseMatrix> {
        apply_sketch(self, &DenseMatrix::identity(self.in_dim))
    }
}

/// `rows x n` OSNAP with `s` nonzeros per column.
pub fn osnap_build(n: usize, rows: usize, s: usize, seed: u64) -> Result<SketchOperator> {
    let op = Osnap::new(n, rows, s, seed)?;
    Ok(SketchOperator { kind: SketchKind::Osnap(op), in_dim: n, out_dim: rows, seed })
}

/// Stacked SRHT on inputs of length `ell`, padded to the next power of two `L`;
/// `m` blocks, output length `m L`, scaled by `1/√(m L)`.
pub fn srht_build(ell: usize, m: usize, seed: u64) -> Result<SketchOperator> {
    let op = StackedSrht::new(ell, m, seed)?;
    let out_dim = op.out_dim();
    Ok(SketchOperator { kind: SketchKind::StackedSrht(op), in_dim: ell, out_dim, seed })
}

/// `p` rows drawn i.i.d. uniformly (with replacement) from `source_rows` elementary rows.
pub fn uniform_sample_build(source_rows: usize, p: usize, seed: u64) -> Result<SketchOperator> {
    if source_rows == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("uniform sample needs source_rows, p >= 1, got {source_rows}, {p}")));
    }
    let mut r = rng::stream(seed, Module::UniformSample, 0);
    let indices = (0..p).map(|_| r.random_range(0..source_rows)).collect();
    Ok(SketchOperator {
        kind: SketchKind::UniformSample(UniformSample { source_rows, indices, replacement: true }),
        in_dim: source_rows,
        out_dim: p,
        seed,
    })
}

/// Row selection with explicit indices (e.g. a sample with some rows removed).
pub fn row_selection(source_rows: usize, indices: Vec<usize>, seed: u64) -> Result<SketchOperator> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= source_rows) {
        return Err(Error::Shape(format!("row index {bad} outside {source_rows}")));
    }
    let out_dim = indices.len();
    Ok(SketchOperator {
        kind: SketchKind::UniformSample(UniformSample { source_rows, indices, replacement: true }),
        in_dim: source_rows,
        out_dim,
        seed,
    })
}

pub fn diagonal_weights(weights: Vec<f64>) -> SketchOperator {
    let n = weights.len();
    SketchOperator { kind: SketchKind::DiagonalWeights(weights), in_dim: n, out_dim: n, seed: 0 }
}

/// Chains operators, first applied first. Empty lists and dimension breaks are errors.
pub fn composite(ops: Vec<SketchOperator>) -> Result<SketchOperator> {
    let (Some(first), Some(last)) = (ops.first(), ops.last()) else {
        return Err(Error::InvalidParameter("composite of zero operators".into()));
    };
    for w in ops.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::Shape(format!(
                "composite chain break: {} out {} -> {} in {}",
                w[0].name(),
                w[0].out_dim,
                w[1].name(),
                w[1].in_dim
            )));
        }
    }
    let (in_dim, out_dim, seed) = (first.in_dim, last.out_dim, first.seed);
    Ok(SketchOperator { kind: SketchKind::Composite(ops), in_dim, out_dim, seed })
}

/// `op * a`. OSNAP costs `O(s nnz(a))`; SRHT runs butterflies per column.
pub fn apply_sketch(op: &SketchOperator, a: &dyn MatrixInput) -> Result<DenseMatrix> {
    if op.in_dim != a.n_rows() {
        return Err(Error::Shape(format!("{} expects {} rows, input has {}", op.name(), op.in_dim, a.n_rows())));
    }
    let cols = a.n_cols();
    match &op.kind {
        SketchKind::Osnap(os) => {
            let mut out = DenseMatrix::zeros(os.rows, cols);
            for j in 0..os.n {
                let mut entries = Vec::new();
                a.for_each_in_row(j, &mut |c, v| entries.push((c, v)));
                if entries.is_empty() {
                    continue;
                }
                for (r, sv) in os.column(j) {
                    let orow = out.row_mut(r);
                    for &(c, v) in &entries {
                        orow[c] += sv * v;
                    }
                }
            }
            Ok(out)
        }
        SketchKind::StackedSrht(h) => {
            let dense = a.to_dense();
            let columns: Vec<Vec<f64>> = (0..cols).into_par_iter().map(|c| h.apply(&dense.col(c))).collect::<Result<_>>()?;
            Ok(DenseMatrix::from_fn(h.out_dim(), cols, |i, j| columns[j][i]))
        }
        SketchKind::UniformSample(us) => {
            let mut out = DenseMatrix::zeros(us.indices.len(), cols);
            for (r, &src) in us.indices.iter().enumerate() {
                let orow = out.row_mut(r);
                a.for_each_in_row(src, &mut |c, v| orow[c] = v);
            }
            Ok(out)
        }
        SketchKind::DiagonalWeights(w) => {
            let mut out = DenseMatrix::zeros(w.len(), cols);
            for (r, &wr) in w.iter().enumerate() {
                let orow = out.row_mut(r);
                a.for_each_in_row(r, &mut |c, v| orow[c] = wr * v);
            }
            Ok(out)
        }
        SketchKind::Composite(ops) => {
            let mut cur = apply_sketch(&ops[0], a)?;
            for o in &ops[1..] {
                cur = apply_sketch(o, &cur)?;
            }
            Ok(cur)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;

    fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut r = rng::stream(seed, Module::Bench, 1);
        DenseMatrix::from_fn(n, d, |_, _| rng::gaussian(&mut r))
    }

    #[test]
    fn osnap_columns_have_s_entries() {
        let op = osnap_build(20, 10, 3, 5).unwrap();
        let s = 3.0f64;
        for j in 0..20 {
            let mut e = vec![0.0; 20];
            e[j] = 1.0;
            let col = op.apply_vec(&e).unwrap();
            let nz: Vec<f64> = col.into_iter().filter(|&v| v != 0.0).collect();
            assert_eq!(nz.len(), 3);
            assert!(nz.iter().all(|v| (v.abs() - 1.0 / s.sqrt()).abs() < 1e-15));
        }
        let SketchKind::Osnap(o) = &op.kind else { unreachable!() };
        assert_eq!(o.to_sparse().nnz(), 60);
    }

    #[test]
    fn osnap_trivial_and_error() {
        let op = osnap_build(1, 1, 1, 9).unwrap();
        let m = op.materialize().unwrap();
        assert_eq!(m.get(0, 0).abs(), 1.0);
        let err = osnap_build(4, 2, 3, 0).unwrap_err();
        assert!(err.to_string().starts_with("sparsity"));
    }

    #[test]
    fn osnap_matches_materialized_sparse_product() {
        let op = osnap_build(64, 16, 4, 11).unwrap();
        let a = gaussian(64, 8, 12);
        let SketchKind::Osnap(o) = &op.kind else { unreachable!() };
        let explicit = o.to_sparse().matmul_dense(&a).unwrap();
        let fast = apply_sketch(&op, &a).unwrap();
        assert!(fast.rel_diff(&explicit) < 1e-12);
        let sparse_in = SparseMatrix::from_dense(&a);
        assert!(apply_sketch(&op, &sparse_in).unwrap().rel_diff(&explicit) < 1e-12);
    }

    #[test]
    fn srht_fast_path_matches_materialization() {
        let op = srht_build(12, 3, 4).unwrap();
        let a = gaussian(12, 5, 13);
        let explicit = op.materialize().unwrap().matmul(&a).unwrap();
        assert!(apply_sketch(&op, &a).unwrap().rel_diff(&explicit) < 1e-12);
    }

    #[test]
    fn uniform_sample_examples() {
        let op = uniform_sample_build(1, 1, 3).unwrap();
        assert_eq!(op.materialize().unwrap().data(), &[1.0]);
        let a = DenseMatrix::from_fn(9, 1, |_, _| 2.5);
        let out = apply_sketch(&uniform_sample_build(9, 14, 3).unwrap(), &a).unwrap();
        assert_eq!(out.shape(), (14, 1));
        assert!(out.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn diagonal_and_composite_rules() {
        let a = gaussian(6, 3, 14);
        assert_eq!(apply_sketch(&SketchOperator::identity(6), &a).unwrap(), a);
        assert!(composite(vec![]).is_err());
        let op = osnap_build(6, 4, 2, 1).unwrap();
        let single = composite(vec![op.clone()]).unwrap();
        assert_eq!(apply_sketch(&single, &a).unwrap(), apply_sketch(&op, &a).unwrap());
        assert!(composite(vec![op.clone(), osnap_build(5, 2, 1, 1).unwrap()]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let op = osnap_build(6, 4, 2, 1).unwrap();
        let err = apply_sketch(&op, &DenseMatrix::zeros(5, 2)).unwrap_err();
        assert!(err.to_string().starts_with("shape"));
    }
}
