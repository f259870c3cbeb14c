//! Oblivious subspace embeddings: the polylog-distortion chain
//! `S M S₁ S₂ A` and its constant-distortion reweighting `W S M S₁ S₂ A`.

use crate::error::{Error, Result};
use crate::linalg::{
    distortion, numerical_rank, qr_preconditioner, singular_values, svd_thin, DenseMatrix, MatrixInput, RANK_TOL_FACTOR,
};
use crate::rng::{derive_seed, Module};
use crate::sdp::{build_packing_instance, solve_packing_sdp, PackingInstance, ProjectionMethod, WeightVector};
use crate::sketch::{
    apply_sketch, composite, diagonal_weights, osnap_build, row_selection, srht_build, uniform_sample_build, SketchKind,
    SketchOperator,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    /// Tradeoff in `(0, 1]`: smaller values give a longer first OSNAP stage with sparser columns.
    pub alpha: f64,
    pub osnap_s2_rows_const: f64,
    pub osnap_s1_rows_const: f64,
    pub srht_blocks: usize,
    /// `p = ceil(C k)` rows are sampled after the Hadamard stage.
    pub sample_const: f64,
    pub sdp: bool,
    pub sdp_accuracy: f64,
    pub sdp_max_iter: usize,
    /// Stopping target for the reweighting; `0` minimises to `sdp_accuracy`.
    pub sdp_target: f64,
    pub projection: ProjectionMethod,
    /// Explicit rank; `None` uses the column count unless `rank_adaptive` is set.
    pub rank_hint: Option<usize>,
    pub rank_adaptive: bool,
    /// Compute the distortion of the result against the SVD of `A`.
    pub measure: bool,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            osnap_s2_rows_const: 4.0,
            osnap_s1_rows_const: 2.0,
            srht_blocks: 8,
            sample_const: 10.0,
            sdp: true,
            sdp_accuracy: 0.1,
            sdp_max_iter: 400,
            sdp_target: 0.0,
            projection: ProjectionMethod::Exact,
            rank_hint: None,
            rank_adaptive: false,
            measure: true,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// `α = 0.1`.
    pub fn preset_alpha_tenth(seed: u64) -> Self {
        Self { alpha: 0.1, ..Self::with_seed(seed) }
    }

    /// `α = 1 / log d`, clamped into `(0, 1]`.
    pub fn preset_alpha_log(d: usize, seed: u64) -> Self {
        Self { alpha: (1.0 / (d.max(3) as f64).ln()).min(1.0), ..Self::with_seed(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.srht_blocks == 0 {
            return Err(Error::InvalidParameter("srht_blocks must be >= 1".into()));
        }
        for (name, v) in [
            ("osnap_s2_rows_const", self.osnap_s2_rows_const),
            ("osnap_s1_rows_const", self.osnap_s1_rows_const),
            ("sample_const", self.sample_const),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sdp_accuracy > 0.0 && self.sdp_accuracy < 1.0) {
            return Err(Error::InvalidParameter(format!("sdp_accuracy must lie in (0, 1), got {}", self.sdp_accuracy)));
        }
        Ok(())
    }
}

/// Sizes of every stage for a target rank `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedDims {
    pub k: usize,
    pub s2_rows: usize,
    pub s2_nnz: usize,
    pub s1_rows: usize,
    pub s1_nnz: usize,
    pub srht_blocks: usize,
    pub srht_padded: usize,
    pub sample_rows: usize,
}

impl EmbedDims {
    pub fn for_rank(k: usize, cfg: &EmbedConfig) -> Self {
        let kf = k.max(1) as f64;
        let logf = kf.ln().max(1.0);
        let s2_rows = (cfg.osnap_s2_rows_const * kf.powf(1.0 + cfg.alpha) * logf).ceil() as usize;
        let s1_rows = (cfg.osnap_s1_rows_const * kf * logf).ceil() as usize;
        let s2_nnz = ((1.0 / cfg.alpha).ceil() as usize).clamp(1, s2_rows);
        let s1_nnz = (logf.ceil() as usize).clamp(1, s1_rows);
        Self {
            k,
            s2_rows,
            s2_nnz,
            s1_rows,
            s1_nnz,
            srht_blocks: cfg.srht_blocks,
            srht_padded: s1_rows.next_power_of_two(),
            sample_rows: (cfg.sample_const * kf).ceil() as usize,
        }
    }
}

/// Chooses the working rank. A hint above `d` is clamped (and reported);
/// without a hint the rank of a short OSNAP sketch is used when
/// `cfg.rank_adaptive` is set, otherwise `d`.
pub fn rank_adaptive_dims(a: &dyn MatrixInput, cfg: &EmbedConfig) -> Result<(EmbedDims, Vec<String>)> {
    let (n, d) = (a.n_rows(), a.n_cols());
    let mut flags = Vec::new();
    let k = match cfg.rank_hint {
        Some(0) => return Err(Error::InvalidParameter("rank hint must be >= 1".into())),
        Some(h) if h > d => {
            flags.push(format!("rank-hint-clamped:{h}->{d}"));
            d
        }
        Some(h) => h,
        None if cfg.rank_adaptive => {
            let rows = (4 * d).min(n);
            let probe = if rows == n {
                a.to_dense()
            } else {
                let op = osnap_build(n, rows, 4.min(rows), derive_seed(cfg.seed, Module::Pipeline, 100))?;
                apply_sketch(&op, a)?
            };
            numerical_rank(&probe, RANK_TOL_FACTOR)?.max(1)
        }
        None => d,
    };
    Ok((EmbedDims::for_rank(k, cfg), flags))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSummary {
    pub objective: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedReport {
    pub dims: EmbedDims,
    pub rows_in: usize,
    pub cols_in: usize,
    pub rows_out: usize,
    /// `κ(G U)` for an orthonormal basis `U` of `col(A)`; `+inf` if rank is lost.
    pub distortion: Option<f64>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub sdp: Option<SdpSummary>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub sketched: DenseMatrix,
    pub operator: SketchOperator,
    pub weights: Option<WeightVector>,
    /// The packing instance the weights were solved on.
    pub packing: Option<PackingInstance>,
    pub report: EmbedReport,
}

struct Chain {
    ops: Vec<SketchOperator>,
    /// Output of `S₁ S₂ A`.
    b1: DenseMatrix,
    sampled: DenseMatrix,
    dims: EmbedDims,
    flags: Vec<String>,
}

fn check_input(a: &dyn MatrixInput) -> Result<()> {
    let (n, d) = (a.n_rows(), a.n_cols());
    if n < d {
        return Err(Error::Shape(format!("embedding needs n >= d, got {n} x {d}")));
    }
    if a.nnz() == 0 {
        return Err(Error::InvalidParameter("input matrix is zero".into()));
    }
    Ok(())
}

fn polylog_chain(a: &dyn MatrixInput, cfg: &EmbedConfig) -> Result<Chain> {
    let n = a.n_rows();
    let (dims, flags) = rank_adaptive_dims(a, cfg)?;
    let s2 = osnap_build(n, dims.s2_rows, dims.s2_nnz, derive_seed(cfg.seed, Module::Pipeline, 0))?;
    let s1 = osnap_build(dims.s2_rows, dims.s1_rows, dims.s1_nnz, derive_seed(cfg.seed, Module::Pipeline, 1))?;
    let h = srht_build(dims.s1_rows, dims.srht_blocks, derive_seed(cfg.seed, Module::Pipeline, 2))?;
    let s = uniform_sample_build(h.out_dim, dims.sample_rows, derive_seed(cfg.seed, Module::Pipeline, 3))?;
    let b2 = apply_sketch(&s2, a)?;
    let b1 = apply_sketch(&s1, &b2)?;
    let sampled = apply_sketch(&s, &apply_sketch(&h, &b1)?)?;
    Ok(Chain { ops: vec![s2, s1, h, s], b1, sampled, dims, flags })
}

fn measure(a: &dyn MatrixInput, sketched: &DenseMatrix) -> Result<(f64, f64, f64)> {
    // G U = (G A) V Σ⁻¹ for the thin SVD A = U Σ Vᵀ.
    let f = svd_thin(&a.to_dense())?;
    let inv: Vec<f64> = f.sigma.iter().map(|s| 1.0 / s).collect();
    let gu = sketched.matmul(&f.v.scale_rows_cols(&inv))?;
    let sv = singular_values(&gu)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if sv.len() == f.sigma.len() { sv.last().copied().unwrap_or(0.0) } else { 0.0 };
    Ok((distortion(&gu)?, smin, smax))
}

fn degenerate(a: &dyn MatrixInput, cfg: &EmbedConfig) -> EmbedResult {
    let sketched = a.to_dense();
    let dims = EmbedDims::for_rank(a.n_cols().max(1), cfg);
    let measured = cfg.measure.then(|| measure(a, &sketched).ok()).flatten();
    EmbedResult {
        operator: SketchOperator::identity(a.n_rows()),
        weights: None,
        packing: None,
        report: EmbedReport {
            dims,
            rows_in: a.n_rows(),
            cols_in: a.n_cols(),
            rows_out: sketched.rows(),
            distortion: measured.map(|m| m.0),
            sigma_min: measured.map(|m| m.1),
            sigma_max: measured.map(|m| m.2),
            sdp: None,
            flags: vec!["degenerate".into()],
        },
        sketched,
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    a: &dyn MatrixInput,
    cfg: &EmbedConfig,
    sketched: DenseMatrix,
    operator: SketchOperator,
    weights: Option<(WeightVector, PackingInstance)>,
    dims: EmbedDims,
    sdp: Option<SdpSummary>,
    flags: Vec<String>,
) -> Result<EmbedResult> {
    let measured = if cfg.measure { Some(measure(a, &sketched)?) } else { None };
    let report = EmbedReport {
        dims,
        rows_in: a.n_rows(),
        cols_in: a.n_cols(),
        rows_out: sketched.rows(),
        distortion: measured.map(|m| m.0),
        sigma_min: measured.map(|m| m.1),
        sigma_max: measured.map(|m| m.2),
        sdp,
        flags,
    };
    let (weights, packing) = weights.unzip();
    Ok(EmbedResult { sketched, operator, weights, packing, report })
}

/// `S M S₁ S₂ A` with `p = ceil(C k)` rows and no reweighting.
pub fn polylog_embed(a: &dyn MatrixInput, cfg: &EmbedConfig) -> Result<EmbedResult> {
    cfg.validate()?;
    if a.n_cols() < 2 {
        return Ok(degenerate(a, cfg));
    }
    check_input(a)?;
    let chain = polylog_chain(a, cfg)?;
    let operator = composite(chain.ops)?;
    finish(a, cfg, chain.sampled, operator, None, chain.dims, None, chain.flags)
}

/// The polylog chain followed by packing-SDP weights `√(p wᵢ)` on the sampled
/// rows. Rows with zero weight are removed, so the output has at most `p` rows.
pub fn constant_embed(a: &dyn MatrixInput, cfg: &EmbedConfig) -> Result<EmbedResult> {
    cfg.validate()?;
    if !cfg.sdp {
        return polylog_embed(a, cfg);
    }
    if a.n_cols() < 2 {
        return Ok(degenerate(a, cfg));
    }
    check_input(a)?;
    let Chain { mut ops, b1, sampled, dims, mut flags } = polylog_chain(a, cfg)?;

    let (q, r) = match qr_preconditioner(&b1) {
        Ok(pre) => (pre.q, pre.r),
        Err(Error::RankDeficient(_)) => {
            let f = svd_thin(&b1)?;
            let inv: Vec<f64> = f.sigma.iter().map(|s| 1.0 / s).collect();
            (f.u, f.v.scale_rows_cols(&inv))
        }
        Err(e) => return Err(e),
    };
    let (SketchKind::StackedSrht(h), SketchKind::UniformSample(us)) = (&ops[2].kind, &ops[3].kind) else {
        unreachable!("chain layout is fixed")
    };
    let indices = us.indices().to_vec();
    let p = indices.len();
    let mut xs = DenseMatrix::zeros(p, dims.s1_rows);
    for (i, &src) in indices.iter().enumerate() {
        xs.row_mut(i).copy_from_slice(&h.unscaled_row(src));
    }
    let source_rows = h.out_dim();

    let inst = build_packing_instance(&xs, &q, &r, cfg.projection)?;
    let sol = solve_packing_sdp(&inst, cfg.sdp_target, cfg.sdp_accuracy, cfg.sdp_max_iter)?;
    if !sol.converged {
        flags.push("not-converged".into());
    }
    let w = sol.weights.as_slice();
    let kept: Vec<usize> = (0..p).filter(|&i| w[i] > 0.0).collect();
    let scale: Vec<f64> = kept.iter().map(|&i| (p as f64 * w[i]).sqrt()).collect();
    let sketched = sampled.select_rows(&kept).scale_rows(&scale)?;

    ops.pop();
    ops.push(row_selection(source_rows, kept.iter().map(|&i| indices[i]).collect(), derive_seed(cfg.seed, Module::Pipeline, 3))?);
    ops.push(diagonal_weights(scale));
    let operator = composite(ops)?;
    let summary = SdpSummary {
        objective: sol.objective,
        lower_bound: sol.lower_bound,
        iterations: sol.iterations,
        converged: sol.converged,
        trace: sol.trace.clone(),
    };
    finish(a, cfg, sketched, operator, Some((sol.weights, inst)), dims, Some(summary), flags)
}
