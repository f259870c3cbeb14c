//! Leverage score estimation from a constant-factor embedding and Bernoulli
//! row sampling with rejection, giving `(1 ± ε)` subspace embeddings.

use rand::Rng;
use rayon::prelude::*;

use crate::embed::{constant_embed, EmbedConfig, EmbedReport};
use crate::error::{Error, Result};
use crate::linalg::{qr_preconditioner, singular_values, svd_thin, DenseMatrix, MatrixInput};
use crate::rng::{self, Module};

#[derive(Debug, Clone, PartialEq)]
pub struct LevSampleConfig {
    pub epsilon: f64,
    pub alpha: f64,
    /// Sample budget `s = c_s k log k / ε²`.
    pub c_s: f64,
    pub jl_cols_stage1: usize,
    /// Stage-2 Gaussian columns are `ceil(stage2_log_mult · log₂ n)`.
    pub stage2_log_mult: f64,
    /// Accept rank-deficient inputs through an SVD preconditioner.
    pub rank_adaptive: bool,
    /// Compare against the SVD of `A` and record the singular deviation.
    pub measure: bool,
    pub embed: EmbedConfig,
    pub seed: u64,
}

impl Default for LevSampleConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.25,
            alpha: 0.25,
            c_s: 8.0,
            jl_cols_stage1: 8,
            stage2_log_mult: 4.0,
            rank_adaptive: false,
            measure: true,
            embed: EmbedConfig::default(),
            seed: 0,
        }
    }
}

impl LevSampleConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, embed: EmbedConfig::with_seed(seed), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.c_s > 0.0) || self.jl_cols_stage1 == 0 || !(self.stage2_log_mult > 0.0) {
            return Err(Error::InvalidParameter("sampling constants must be positive".into()));
        }
        Ok(())
    }

    /// `c_s k log k / ε²` with `log` floored at 1.
    pub fn budget(&self, k: usize) -> f64 {
        let kf = k.max(1) as f64;
        self.c_s * kf * kf.ln().max(1.0) / (self.epsilon * self.epsilon)
    }
}

/// Preconditioner `R` with `‖aᵢR‖² ∈ [τᵢ/ξ², τᵢ]`.
#[derive(Debug, Clone)]
pub struct LevFactors {
    pub r: DenseMatrix,
    /// Measured distortion `ξ` of the embedding `R` came from.
    pub xi: f64,
    pub embed: EmbedReport,
}

/// QR of a constant-factor embedding of `A`. `R` is rescaled by `σ_min(G U)`
/// so that the row norms of `A R` never exceed the leverage scores.
pub fn qr_lev_factors(a: &dyn MatrixInput, cfg: &LevSampleConfig) -> Result<LevFactors> {
    let emb_cfg = EmbedConfig { measure: true, alpha: cfg.alpha, seed: cfg.seed, ..cfg.embed.clone() };
    let emb = constant_embed(a, &emb_cfg)?;
    let r = match qr_preconditioner(&emb.sketched) {
        Ok(pre) => pre.r,
        Err(Error::RankDeficient(msg)) => {
            if !cfg.rank_adaptive {
                return Err(Error::RankDeficient(msg));
            }
            let f = svd_thin(&emb.sketched)?;
            let inv: Vec<f64> = f.sigma.iter().map(|s| 1.0 / s).collect();
            f.v.scale_rows_cols(&inv)
        }
        Err(e) => return Err(e),
    };
    let xi = emb.report.distortion.unwrap_or(f64::INFINITY);
    let smin = emb.report.sigma_min.unwrap_or(1.0);
    let r = if smin > 0.0 && smin.is_finite() { r.scale(smin) } else { r };
    Ok(LevFactors { r, xi, embed: emb.report })
}

/// Rows kept by [`two_stage_sample`] and their inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRows {
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    /// Whether the rows handed out were divided by `√fᵢ`.
    pub scaled: bool,
}

impl SampledRows {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `A[indices] / √f`.
    pub fn apply(&self, a: &dyn MatrixInput) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.indices.len(), a.n_cols());
        for (r, (&i, &f)) in self.indices.iter().zip(&self.probs).enumerate() {
            let root = f.sqrt();
            let row = out.row_mut(r);
            a.for_each_in_row(i, &mut |c, v| row[c] = v / root);
        }
        out
    }
}

/// Detailed per-row quantities, exposed for testing the sampling contract.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostics {
    /// Stage-1 inclusion probability of every row.
    pub stage1: Vec<f64>,
    /// Estimated Frobenius mass `‖A R‖²_F`.
    pub total: f64,
}

fn gaussian_block(rows: usize, cols: usize, seed: u64, module: Module) -> DenseMatrix {
    let mut r = rng::stream(seed, module, 0);
    let scale = 1.0 / (cols as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng::gaussian(&mut r) * scale)
}

fn row_times(a: &dyn MatrixInput, i: usize, m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    a.for_each_in_row(i, &mut |c, v| {
        for (o, &x) in out.iter_mut().zip(m.row(c)) {
            *o += v * x;
        }
    });
    out
}

/// Bernoulli sampling with `fᵢ` between `min(1, (s/16)‖aᵢR‖²/‖AR‖²_F)` and
/// `min(1, s‖aᵢR‖²/‖AR‖²_F)`.
///
/// Stage 1 estimates `‖aᵢR‖²` with `jl_cols` Gaussian columns and keeps row
/// `i` with an inflated probability; stage 2 re-estimates the survivors with
/// `ceil(stage2_log_mult · log₂ n)` columns and accepts by rejection, so the
/// overall probability is `min(p₁, f)`. A stage whose column count reaches
/// the rank of `R` uses exact norms instead.
pub fn two_stage_sample(
    a: &dyn MatrixInput,
    r: &DenseMatrix,
    s: f64,
    jl_cols: usize,
    stage2_log_mult: f64,
    seed: u64,
) -> Result<(SampledRows, SampleDiagnostics)> {
    let n = a.n_rows();
    if r.rows() != a.n_cols() {
        return Err(Error::Shape(format!("preconditioner {:?} for {} columns", r.shape(), a.n_cols())));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("oversampling s must be positive, got {s}")));
    }
    let k = r.cols();
    let stage_op = |cols: usize, module: Module| -> Result<DenseMatrix> {
        if cols >= k {
            Ok(r.clone())
        } else {
            r.matmul(&gaussian_block(k, cols, seed, module))
        }
    };
    let op1 = stage_op(jl_cols.max(1), Module::LevStage1)?;
    let est1: Vec<f64> = (0..n).into_par_iter().map(|i| row_times(a, i, &op1).iter().map(|v| v * v).sum()).collect();
    let total: f64 = est1.iter().sum();
    if total == 0.0 {
        return Ok((SampledRows { indices: vec![], probs: vec![], scaled: true }, SampleDiagnostics { stage1: vec![0.0; n], total }));
    }
    let target = s / 4.0;
    let stage1: Vec<f64> = est1.iter().map(|e| (4.0 * target * e / total).min(1.0)).collect();
    let cols2 = (stage2_log_mult * (n.max(2) as f64).log2()).ceil() as usize;
    let op2 = stage_op(cols2, Module::LevStage2)?;

    let picked: Vec<Option<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut coin = rng::stream(seed, Module::LevRow, i as u64);
            let (u1, u2): (f64, f64) = (coin.random(), coin.random());
            if stage1[i] == 0.0 || u1 >= stage1[i] {
                return None;
            }
            let e2: f64 = row_times(a, i, &op2).iter().map(|v| v * v).sum();
            let f = (target * e2 / total).min(1.0);
            let accept = (f / stage1[i]).min(1.0);
            (u2 < accept).then_some((i, f.min(stage1[i])))
        })
        .collect();
    let (indices, probs) = picked.into_iter().flatten().unzip();
    Ok((SampledRows { indices, probs, scaled: true }, SampleDiagnostics { stage1, total }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsEmbedReport {
    pub rows_in: usize,
    pub cols_in: usize,
    pub rows_out: usize,
    pub budget: f64,
    pub xi: f64,
    /// `max |σⱼ(S U) − 1|` over all singular values.
    pub max_deviation: Option<f64>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EpsEmbedResult {
    pub sketched: DenseMatrix,
    pub sample: SampledRows,
    pub report: EpsEmbedReport,
}

/// `S A` with `S` diagonal on a leverage-score sample, rows scaled by `1/√fᵢ`.
pub fn eps_subspace_embed(a: &dyn MatrixInput, cfg: &LevSampleConfig) -> Result<EpsEmbedResult> {
    cfg.validate()?;
    let lev = qr_lev_factors(a, cfg)?;
    let budget = cfg.budget(lev.r.cols());
    let (sample, _) = two_stage_sample(a, &lev.r, budget, cfg.jl_cols_stage1, cfg.stage2_log_mult, cfg.seed)?;
    let sketched = sample.apply(a);
    let mut flags = lev.embed.flags.clone();
    let (mut dev, mut smin, mut smax) = (None, None, None);
    if cfg.measure {
        let f = svd_thin(&a.to_dense())?;
        let inv: Vec<f64> = f.sigma.iter().map(|s| 1.0 / s).collect();
        let su = sketched.matmul(&f.v.scale_rows_cols(&inv))?;
        let mut sv = singular_values(&su)?;
        sv.resize(f.sigma.len(), 0.0);
        dev = Some(sv.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
        smin = sv.last().copied();
        smax = sv.first().copied();
    }
    if sample.len() as f64 > budget {
        flags.push("over-budget".into());
    }
    let report = EpsEmbedReport {
        rows_in: a.n_rows(),
        cols_in: a.n_cols(),
        rows_out: sample.len(),
        budget,
        xi: lev.xi,
        max_deviation: dev,
        sigma_min: smin,
        sigma_max: smax,
        flags,
    };
    Ok(EpsEmbedResult { sketched, sample, report })
}

/// Row-norm sampling for approximate matrix products: `r` i.i.d. draws with
/// `pᵢ = ‖mᵢ‖²/‖M‖²_F`, each scaled by `1/√(r pᵢ)`. Returns `S M`.
pub fn amm_sample(m: &DenseMatrix, r: usize, seed: u64) -> Result<DenseMatrix> {
    if r == 0 {
        return Err(Error::InvalidParameter("amm needs r >= 1".into()));
    }
    let norms: Vec<f64> = (0..m.rows()).map(|i| m.row_norm_sq(i)).collect();
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return Ok(DenseMatrix::zeros(r, m.cols()));
    }
    let mut cdf = Vec::with_capacity(norms.len());
    let mut acc = 0.0;
    for v in &norms {
        acc += v / total;
        cdf.push(acc);
    }
    let mut g = rng::stream(seed, Module::Amm, 0);
    let mut out = DenseMatrix::zeros(r, m.cols());
    for t in 0..r {
        let u: f64 = g.random::<f64>() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(norms.len() - 1);
        let i = (0..=i).rev().find(|&j| norms[j] > 0.0).unwrap_or(i);
        let scale = 1.0 / (r as f64 * norms[i] / total).sqrt();
        out.row_mut(t).iter_mut().zip(m.row(i)).for_each(|(o, &v)| *o = v * scale);
    }
    Ok(out)
}

/// `Σᵢ min(1, s τᵢ / Σ τ)`; never exceeds `s`.
pub fn expected_sample_size(scores: &[f64], s: f64) -> f64 {
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    scores.iter().map(|t| (s * t / total).min(1.0)).sum()
}

/// Exact `‖aᵢR‖²` for every row.
pub fn exact_row_norms(a: &dyn MatrixInput, r: &DenseMatrix) -> Vec<f64> {
    (0..a.n_rows()).map(|i| row_times(a, i, r).iter().map(|v| v * v).sum()).collect()
}
