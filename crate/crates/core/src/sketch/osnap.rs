use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::rng::{self, Module};

/// Sparse oblivious embedding with exactly `s` nonzeros of value `±1/√s` per
/// input column. Column `j`'s pattern comes from its own stream, so columns can
/// be regenerated independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Osnap {
    pub(crate) n: usize,
    pub(crate) rows: usize,
    pub(crate) s: usize,
    /// `targets[j * s + t]` is the output row of the `t`-th nonzero of column `j`.
    pub(crate) targets: Vec<u32>,
    pub(crate) signs: Vec<f64>,
}

impl Osnap {
    pub fn new(n: usize, rows: usize, s: usize, seed: u64) -> Result<Self> {
        if rows == 0 || s == 0 {
            return Err(Error::InvalidParameter(format!("osnap needs rows >= 1 and s >= 1, got {rows}, {s}")));
        }
        if s > rows {
            return Err(Error::Sparsity(format!("s = {s} exceeds rows = {rows}")));
        }
        let value = 1.0 / (s as f64).sqrt();
        let mut targets = Vec::with_capacity(n * s);
        let mut signs = Vec::with_capacity(n * s);
        for j in 0..n {
            let mut r = rng::stream(seed, Module::Osnap, j as u64);
            let mut picked = rand::seq::index::sample(&mut r, rows, s).into_vec();
            picked.sort_unstable();
            for row in picked {
                targets.push(row as u32);
                signs.push(if r.random::<bool>() { value } else { -value });
            }
        }
        Ok(Self { n, rows, s, targets, signs })
    }

    pub fn nonzeros_per_column(&self) -> usize {
        self.s
    }

    /// Output rows and signed values of input column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = j * self.s..(j + 1) * self.s;
        self.targets[span.clone()].iter().map(|&t| t as usize).zip(self.signs[span].iter().copied())
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let trip: Vec<_> = (0..self.n).flat_map(|j| self.column(j).map(move |(r, v)| (r, j, v))).collect();
        SparseMatrix::from_triplets(self.rows, self.n, &trip).expect("osnap entries are in range")
    }
}
