//! Maximal linearly independent row subsets: column reduction by a sparse
//! rank-preserving sketch, leverage-sampled row reduction and iterative basis
//! growth against the orthogonal complement of the rows chosen so far.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::embed::EmbedConfig;
use crate::error::{Error, Result};
use crate::leverage::{qr_lev_factors, LevSampleConfig};
use crate::linalg::{
    dot, exact_leverage_scores, rank_threshold, singular_values, svd_thin, DenseMatrix, MatrixInput, SparseMatrix,
    RANK_TOL_FACTOR,
};
use crate::rng::{self, derive_seed, Module};

/// Rows per unit of target rank.
pub const RANK_SKETCH_C: usize = 11;

/// Sparse `(11 k) x d` map with at most two `±1` entries per column.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSketch {
    pub s: SparseMatrix,
    pub k_target: usize,
    pub seed: u64,
}

impl RankSketch {
    /// `A Sᵀ`, touching each nonzero of `A` at most twice.
    pub fn apply(&self, a: &dyn MatrixInput) -> Result<DenseMatrix> {
        if a.n_cols() != self.s.cols() {
            return Err(Error::Shape(format!("rank sketch over {} columns applied to {}", self.s.cols(), a.n_cols())));
        }
        let st = self.s.transpose();
        let mut out = DenseMatrix::zeros(a.n_rows(), self.s.rows());
        for i in 0..a.n_rows() {
            let row = out.row_mut(i);
            a.for_each_in_row(i, &mut |c, v| {
                for (r, sv) in st.row_entries(c) {
                    row[r] += v * sv;
                }
            });
        }
        Ok(out)
    }
}

/// Column `j` is sent to rows `π₁(j) mod m` and `π₂(j) mod m` with random
/// signs (one entry when they coincide), for two seeded permutations.
pub fn rank_preserving_sketch(d: usize, k_target: usize, seed: u64) -> Result<RankSketch> {
    if k_target == 0 || k_target > d {
        return Err(Error::InvalidParameter(format!("k_target must lie in [1, {d}], got {k_target}")));
    }
    let m = RANK_SKETCH_C * k_target;
    let mut g = rng::stream(seed, Module::RankSketch, 0);
    let mut p1: Vec<usize> = (0..d).collect();
    let mut p2: Vec<usize> = (0..d).collect();
    p1.shuffle(&mut g);
    p2.shuffle(&mut g);
    let mut trip = Vec::with_capacity(2 * d);
    for j in 0..d {
        let (r1, r2) = (p1[j] % m, p2[j] % m);
        let (s1, s2) = (g.random::<bool>(), g.random::<bool>());
        trip.push((r1, j, if s1 { 1.0 } else { -1.0 }));
        if r2 != r1 {
            trip.push((r2, j, if s2 { 1.0 } else { -1.0 }));
        }
    }
    Ok(RankSketch { s: SparseMatrix::from_triplets(m, d, &trip)?, k_target, seed })
}

fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Orthonormal rows spanning the orthogonal complement of the row space.
pub fn orthogonal_complement(rows: &DenseMatrix) -> Result<DenseMatrix> {
    let c = rows.cols();
    if rows.rows() == 0 {
        return Ok(DenseMatrix::identity(c));
    }
    let f = svd_thin(rows)?;
    let mut basis: Vec<Vec<f64>> = (0..f.rank()).map(|j| f.v.col(j)).collect();
    let start = basis.len();
    for j in 0..c {
        if basis.len() == c {
            break;
        }
        let mut e = vec![0.0; c];
        e[j] = 1.0;
        orthonormalize_against(&mut e, &basis);
        let norm = dot(&e, &e).sqrt();
        if norm > 1e-6 {
            e.iter_mut().for_each(|x| *x /= norm);
            basis.push(e);
        }
    }
    let comp = &basis[start..];
    Ok(DenseMatrix::from_fn(comp.len(), c, |i, j| comp[i][j]))
}

/// Incremental Gram–Schmidt over rows, accepting a row when its residual
/// against the accepted ones exceeds the rank tolerance.
struct Span {
    basis: Vec<Vec<f64>>,
    threshold: f64,
}

impl Span {
    fn new(threshold: f64) -> Self {
        Self { basis: Vec::new(), threshold }
    }

    fn try_add(&mut self, row: &[f64]) -> bool {
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            return false;
        }
        let mut v = row.to_vec();
        orthonormalize_against(&mut v, &self.basis);
        let res = dot(&v, &v).sqrt();
        if res <= self.threshold || res <= 1e-10 * norm {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= res);
        self.basis.push(v);
        true
    }
}

fn threshold_for(m: &DenseMatrix) -> Result<f64> {
    let smax = singular_values(m)?.first().copied().unwrap_or(0.0);
    Ok(rank_threshold(smax, m.rows(), m.cols(), RANK_TOL_FACTOR))
}

/// Maximal independent subset of `rows`, scanning in order so that earlier
/// rows win ties. Returns the matching entries of `global_indices`.
pub fn independent_subset(rows: &DenseMatrix, global_indices: &[usize]) -> Result<Vec<usize>> {
    if global_indices.len() != rows.rows() {
        return Err(Error::Shape(format!("{} indices for {} rows", global_indices.len(), rows.rows())));
    }
    let mut span = Span::new(threshold_for(rows)?);
    Ok((0..rows.rows()).filter(|&i| span.try_add(rows.row(i))).map(|i| global_indices[i]).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BasisIteration {
    pub iteration: usize,
    pub residual_rank: usize,
    pub sampled: usize,
    pub gained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisResult {
    /// Row indices, ascending.
    pub indices: Vec<usize>,
    pub k: usize,
    pub iterations: usize,
    pub trace: Vec<BasisIteration>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    /// Rows sampled per unit of residual rank in each growth step.
    pub c_r: f64,
    /// Iteration cap is `cap_log_mult · log₂ N + cap_add`.
    pub cap_log_mult: f64,
    pub cap_add: usize,
    /// Initial target rank for the doubling estimate.
    pub k_start: usize,
    /// Reduction keeps about `reduce_const · k log k` rows.
    pub reduce_const: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { c_r: 10.0, cap_log_mult: 10.0, cap_add: 20, k_start: 16, reduce_const: 8.0, alpha: 0.25, seed: 0 }
    }
}

impl BasisConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

fn rank_above(m: &DenseMatrix, thr: f64) -> Result<usize> {
    if m.cols() == 0 || m.rows() == 0 {
        return Ok(0);
    }
    Ok(singular_values(m)?.iter().filter(|&&s| s > thr).count())
}

/// Leverage estimates of `m`: exact for small inputs, otherwise from a
/// constant-factor embedding.
fn leverage_estimates(m: &DenseMatrix, rank: usize, seed: u64) -> Result<Vec<f64>> {
    let (n, c) = m.shape();
    if n < 4 * c || n < 256 {
        return exact_leverage_scores(m);
    }
    let cfg = LevSampleConfig {
        rank_adaptive: true,
        measure: false,
        embed: EmbedConfig { rank_hint: Some(rank.max(1)), ..EmbedConfig::with_seed(seed) },
        ..LevSampleConfig::with_seed(seed)
    };
    let lev = qr_lev_factors(m, &cfg)?;
    Ok((0..n).map(|i| lev.r.t_matvec(m.row(i)).map(|v| dot(&v, &v)).unwrap_or(0.0)).collect())
}

/// Grows a set of independent rows of `b` by repeatedly leverage-sampling the
/// part of `b` outside the current span. Stops when that residual vanishes;
/// past the iteration cap, a deterministic in-order scan completes the basis.
pub fn grow_basis(b: &DenseMatrix, cfg: &BasisConfig) -> Result<BasisResult> {
    let (n, c) = b.shape();
    let thr = threshold_for(b)?;
    let mut span = Span::new(thr);
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let cap = (cfg.cap_log_mult * (n.max(2) as f64).log2()).ceil() as usize + cfg.cap_add;
    let mut fallback = false;
    let mut iterations = 0;
    loop {
        let z = if selected.is_empty() { DenseMatrix::identity(c) } else { orthogonal_complement(&b.select_rows(&selected))? };
        let resid = b.matmul(&z.transpose())?;
        let r = rank_above(&resid, thr)?;
        if r == 0 {
            break;
        }
        if iterations == cap {
            fallback = true;
            let before = selected.len();
            for i in 0..n {
                if !selected.contains(&i) && span.try_add(b.row(i)) {
                    selected.push(i);
                }
            }
            trace.push(BasisIteration { iteration: iterations, residual_rank: r, sampled: n, gained: selected.len() - before });
            break;
        }
        iterations += 1;
        let scores = leverage_estimates(&resid, r, derive_seed(cfg.seed, Module::BasisGrow, iterations as u64))?;
        let total: f64 = scores.iter().sum();
        let draws = (cfg.c_r * r as f64).ceil() as usize;
        let mut g = rng::stream(cfg.seed, Module::BasisGrow, iterations as u64);
        let mut picked: Vec<usize> = Vec::with_capacity(draws);
        if total > 0.0 {
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for s in &scores {
                acc += s.max(0.0);
                cdf.push(acc);
            }
            for _ in 0..draws {
                let u = g.random::<f64>() * acc;
                picked.push(cdf.partition_point(|&x| x <= u).min(n - 1));
            }
        }
        picked.sort_unstable();
        picked.dedup();
        let before = selected.len();
        for i in picked.iter().copied() {
            if !selected.contains(&i) && span.try_add(b.row(i)) {
                selected.push(i);
            }
        }
        trace.push(BasisIteration { iteration: iterations, residual_rank: r, sampled: picked.len(), gained: selected.len() - before });
    }
    selected.sort_unstable();
    Ok(BasisResult { k: selected.len(), indices: selected, iterations, trace, fallback })
}

/// Independent rows of `a`: doubling rank estimate through the sparse sketch,
/// leverage-sampled reduction of `B = A Sᵀ`, then [`grow_basis`]. Indices refer
/// to rows of `a`. The result is checked against the rank of `a` and completed
/// by an in-order scan (flagged as fallback) if sampling missed a direction.
pub fn select_independent_rows(a: &dyn MatrixInput, cfg: &BasisConfig) -> Result<BasisResult> {
    let (n, d) = (a.n_rows(), a.n_cols());
    if n == 0 || d == 0 || a.nnz() == 0 {
        return Ok(BasisResult { indices: vec![], k: 0, iterations: 0, trace: vec![], fallback: false });
    }
    let dense = a.to_dense();
    let mut k_target = cfg.k_start.max(1);
    let b = loop {
        if RANK_SKETCH_C * k_target >= d {
            break dense.clone();
        }
        let sk = rank_preserving_sketch(d, k_target, derive_seed(cfg.seed, Module::RankSketch, k_target as u64))?;
        let b = sk.apply(a)?;
        if rank_above(&b, threshold_for(&b)?)? < k_target {
            break b;
        }
        k_target *= 2;
    };
    let thr_b = threshold_for(&b)?;
    let k_est = rank_above(&b, thr_b)?;

    let kf = k_est.max(1) as f64;
    let reduced_size = cfg.reduce_const * kf * kf.ln().max(1.0);
    let candidates: Vec<usize> = if (n as f64) > 4.0 * reduced_size && n >= 256 {
        let scores = leverage_estimates(&b, k_est, derive_seed(cfg.seed, Module::BasisGrow, 0))?;
        let total: f64 = scores.iter().map(|s| s.max(0.0)).sum();
        let reduce_seed = derive_seed(cfg.seed, Module::BasisGrow, u64::MAX);
        (0..n)
            .filter(|&i| {
                let f = (reduced_size * scores[i].max(0.0) / total).min(1.0);
                f > 0.0 && rng::stream(reduce_seed, Module::LevRow, i as u64).random::<f64>() < f
            })
            .collect()
    } else {
        (0..n).collect()
    };

    let sub = b.select_rows(&candidates);
    let grown = grow_basis(&sub, cfg)?;
    let mut indices: Vec<usize> = grown.indices.iter().map(|&i| candidates[i]).collect();
    let mut fallback = grown.fallback;
    let mut trace = grown.trace;

    let thr_a = threshold_for(&dense)?;
    let rank_a = rank_above(&dense, thr_a)?;
    if indices.len() < rank_a {
        fallback = true;
        let mut span = Span::new(thr_a);
        let mut kept = Vec::new();
        for &i in &indices {
            if span.try_add(dense.row(i)) {
                kept.push(i);
            }
        }
        let before = kept.len();
        for i in 0..n {
            if kept.len() == rank_a {
                break;
            }
            if !kept.contains(&i) && span.try_add(dense.row(i)) {
                kept.push(i);
            }
        }
        trace.push(BasisIteration { iteration: grown.iterations + 1, residual_rank: rank_a - before, sampled: n, gained: kept.len() - before });
        indices = kept;
    }
    indices.sort_unstable();
    Ok(BasisResult { k: indices.len(), indices, iterations: grown.iterations, trace, fallback })
}

/// Independent columns of `a`, via its transpose.
pub fn select_independent_columns(a: &DenseMatrix, cfg: &BasisConfig) -> Result<BasisResult> {
    select_independent_rows(&a.transpose(), cfg)
}
