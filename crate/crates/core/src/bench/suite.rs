//! Seeded test-matrix generators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, DenseMatrix};
use crate::rng::{self, Module};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Instance {
    Gaussian { n: usize, d: usize },
    /// Product of `n × k` and `k × d` Gaussian factors.
    RankDeficient { n: usize, d: usize, k: usize },
    /// `n` rows cycling through `k` distinct Gaussian rows.
    Duplicated { n: usize, d: usize, k: usize },
    /// Gaussian with row 0 scaled by `weight`.
    SingleHeavyRow { n: usize, d: usize, weight: f64 },
    /// Singular values spread geometrically over `[1/kappa, 1]` before mixing.
    IllConditioned { n: usize, d: usize, kappa: f64 },
}

impl Instance {
    pub fn name(&self) -> &'static str {
        match self {
            Instance::Gaussian { .. } => "gaussian",
            Instance::RankDeficient { .. } => "rank-deficient",
            Instance::Duplicated { .. } => "duplicated",
            Instance::SingleHeavyRow { .. } => "single-heavy-row",
            Instance::IllConditioned { .. } => "ill-conditioned",
        }
    }

    fn id(&self) -> u64 {
        match self {
            Instance::Gaussian { .. } => 0,
            Instance::RankDeficient { .. } => 1,
            Instance::Duplicated { .. } => 2,
            Instance::SingleHeavyRow { .. } => 3,
            Instance::IllConditioned { .. } => 4,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            Instance::Gaussian { n, d }
            | Instance::RankDeficient { n, d, .. }
            | Instance::Duplicated { n, d, .. }
            | Instance::SingleHeavyRow { n, d, .. }
            | Instance::IllConditioned { n, d, .. } => (n, d),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<DenseMatrix> {
        let mut r = rng::stream(seed, Module::Bench, self.id());
        let mut gauss = |rows: usize, cols: usize| DenseMatrix::from_fn(rows, cols, |_, _| rng::gaussian(&mut r));
        match *self {
            Instance::Gaussian { n, d } => Ok(gauss(n, d)),
            Instance::RankDeficient { n, d, k } => {
                if k > d.min(n) {
                    return Err(Error::InvalidParameter(format!("rank {k} exceeds min({n}, {d})")));
                }
                let left = gauss(n, k);
                let right = gauss(k, d);
                left.matmul(&right)
            }
            Instance::Duplicated { n, d, k } => {
                if k == 0 {
                    return Err(Error::InvalidParameter("duplicated instance needs k >= 1".into()));
                }
                let block = gauss(k, d);
                Ok(DenseMatrix::from_fn(n, d, |i, j| block.get(i % k, j)))
            }
            Instance::SingleHeavyRow { n, d, weight } => {
                let mut a = gauss(n, d);
                if n > 0 {
                    a.row_mut(0).iter_mut().for_each(|v| *v *= weight);
                }
                Ok(a)
            }
            Instance::IllConditioned { n, d, kappa } => {
                if !(kappa >= 1.0) {
                    return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
                }
                if n < d {
                    return Err(Error::Shape(format!("ill-conditioned instance needs n >= d, got {n} x {d}")));
                }
                let u = householder_qr(&gauss(n, d))?.q;
                let v = householder_qr(&gauss(d, d))?.q;
                let spread: Vec<f64> = (0..d)
                    .map(|j| if d > 1 { kappa.powf(-(j as f64) / (d - 1) as f64) } else { 1.0 })
                    .collect();
                u.scale_rows_cols(&spread).matmul(&v.transpose())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub instances: Vec<Instance>,
    pub seeds: Vec<u64>,
}

impl BenchSuite {
    /// One instance of every generator at `n × d`, seeds `0..n_seeds`.
    pub fn standard(n: usize, d: usize, n_seeds: u64) -> Self {
        let k = (d / 2).max(1);
        Self {
            instances: vec![
                Instance::Gaussian { n, d },
                Instance::RankDeficient { n, d, k },
                Instance::Duplicated { n, d, k },
                Instance::SingleHeavyRow { n, d, weight: 1e3 },
                Instance::IllConditioned { n, d, kappa: 1e6 },
            ],
            seeds: (0..n_seeds).collect(),
        }
    }
}
