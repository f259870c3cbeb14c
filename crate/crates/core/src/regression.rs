//! Overdetermined least squares through a leverage-sampled embedding of
//! `[A | b]`, a QR preconditioner from a constant-factor embedding of `A`, a
//! closed-form warm start and gradient descent on the sketched problem.

use crate::embed::{constant_embed, EmbedConfig};
use crate::error::{Error, Result};
use crate::leverage::{eps_subspace_embed, LevSampleConfig};
use crate::rng::{derive_seed, Module};
use crate::linalg::{norm2, pseudo_inverse_apply, qr_preconditioner, singular_values, spectral_norm, DenseMatrix, MatrixInput};

/// Minimum-norm solution of `min ‖A x − b‖` and its residual.
pub fn exact_lsq_oracle(a: &DenseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let x = pseudo_inverse_apply(a, b)?;
    let res = residual(a, &x, b)?;
    Ok((x, res))
}

fn residual(a: &dyn MatrixInput, x: &[f64], b: &[f64]) -> Result<f64> {
    if x.len() != a.n_cols() || b.len() != a.n_rows() {
        return Err(Error::Shape(format!("residual of {}x{} with x {} and b {}", a.n_rows(), a.n_cols(), x.len(), b.len())));
    }
    let mut sq = 0.0;
    for (i, &bi) in b.iter().enumerate() {
        let mut v = -bi;
        a.for_each_in_row(i, &mut |c, av| v += av * x[c]);
        sq += v * v;
    }
    Ok(sq.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Objective `‖M x − c‖²` at every iterate, starting with `x0`.
    pub trace: Vec<f64>,
    pub budget: usize,
    pub kappa: f64,
    pub capped: bool,
}

/// Gradient descent on `‖M x − c‖²` with step `1/σ_max(M)²`.
///
/// Runs at most `ceil(c_it κ(M)² ln(1/eps))` steps (and `cap` if given). Exits
/// early when the gradient vanishes or the objective has dropped by less than
/// `eps/10` relative over the last 5 steps; a step that would raise the
/// objective ends the run with the previous iterate.
pub fn gd_lsq(m: &DenseMatrix, c: &[f64], x0: &[f64], eps: f64, c_it: f64, cap: Option<usize>) -> Result<GdOutcome> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if c.len() != m.rows() || x0.len() != m.cols() {
        return Err(Error::Shape(format!("gd on {:?} with c {} and x0 {}", m.shape(), c.len(), x0.len())));
    }
    let sv = singular_values(m)?;
    let (smax, smin) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    let kappa = if sv.len() == m.cols() && smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !kappa.is_finite() {
        return Err(Error::RankDeficient(format!("gradient descent needs finite κ(M), got σ_min = {smin}")));
    }
    let power = spectral_norm(m, 1e-10, 2000, 0)?;
    let lip = power.value.max(smax);
    let eta = 1.0 / (lip * lip);
    let mut budget = (c_it * kappa * kappa * (1.0 / eps).ln()).ceil().max(1.0) as usize;
    let mut capped_by_user = false;
    if let Some(cap) = cap {
        if cap < budget {
            budget = cap;
            capped_by_user = true;
        }
    }

    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut r = m.matvec(x)?;
        r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= ci);
        Ok((r.iter().map(|v| v * v).sum(), r))
    };
    let mut x = x0.to_vec();
    let (mut f, mut r) = objective(&x)?;
    let mut trace = vec![f];
    let scale = smax * norm2(c).max(f.sqrt());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        let g = m.t_matvec(&r)?;
        if norm2(&g) <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        let next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
        let (fn_, rn) = objective(&next)?;
        if fn_ > f {
            converged = true;
            break;
        }
        x = next;
        f = fn_;
        r = rn;
        iterations += 1;
        trace.push(f);
        if trace.len() > 5 {
            let old = trace[trace.len() - 6];
            if old - f <= eps / 10.0 * f {
                converged = true;
                break;
            }
        }
    }
    Ok(GdOutcome { x, iterations, trace, budget, kappa, capped: !converged && (capped_by_user || iterations == budget) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub epsilon: f64,
    pub alpha: f64,
    /// Multiplier of the GD iteration budget.
    pub c_it: f64,
    pub cap: Option<usize>,
    /// Solve exactly as well and report the residual ratio.
    pub oracle: bool,
    pub lev: LevSampleConfig,
    pub embed: EmbedConfig,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            alpha: 0.25,
            c_it: 4.0,
            cap: None,
            oracle: false,
            lev: LevSampleConfig::default(),
            embed: EmbedConfig::default(),
            seed: 0,
        }
    }
}

impl RegressionConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Solution in the original coordinates.
    pub y: Vec<f64>,
    /// `‖A y − b‖` on the original data.
    pub residual: f64,
    pub iterations: usize,
    pub warm_start_residual: f64,
    pub oracle_residual: Option<f64>,
    pub oracle_ratio: Option<f64>,
    /// `κ(S A R)` of the preconditioned sketched matrix.
    pub kappa_sar: f64,
    pub rows_sketched: usize,
    pub gd_trace: Vec<f64>,
    pub flags: Vec<String>,
}

/// `(1 + ε)`-approximate least squares.
///
/// `S` is a `(1 ± √ε)` leverage-score embedding of `[A | b]`; `R` comes from a
/// QR of a constant-factor embedding `G A`. The warm start is the
/// preconditioned coordinate `y₀ = R⁻¹ (G A)⁺ G b`, then gradient descent runs
/// on `(S A R, S b)`. The result is never worse than the warm start.
pub fn solve_regression(a: &DenseMatrix, b: &[f64], cfg: &RegressionConfig) -> Result<RegressionResult> {
    let (n, d) = a.shape();
    if b.len() != n {
        return Err(Error::Shape(format!("rhs length {} for {n} rows", b.len())));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", cfg.epsilon)));
    }
    if n < d {
        return Err(Error::Shape(format!("regression needs n >= d, got {n} x {d}")));
    }
    let mut flags = Vec::new();

    let lev_seed = derive_seed(cfg.seed, Module::Regression, 0);
    let ab = a.hstack(&DenseMatrix::column(b))?;
    let lev_cfg = LevSampleConfig {
        epsilon: cfg.epsilon.sqrt(),
        alpha: cfg.alpha,
        rank_adaptive: true,
        measure: false,
        seed: lev_seed,
        embed: EmbedConfig { seed: lev_seed, measure: true, ..cfg.lev.embed.clone() },
        ..cfg.lev.clone()
    };
    let sketch = eps_subspace_embed(&ab, &lev_cfg)?;
    let all_but_last: Vec<usize> = (0..d).collect();
    let sa = sketch.sketched.select_cols(&all_but_last);
    let sb = sketch.sketched.col(d);

    let emb_cfg = EmbedConfig { alpha: cfg.alpha, measure: false, seed: derive_seed(cfg.seed, Module::Regression, 1), ..cfg.embed.clone() };
    let g = constant_embed(a, &emb_cfg)?;
    let gb = crate::sketch::apply_sketch(&g.operator, &DenseMatrix::column(b))?.into_data();
    let pre = qr_preconditioner(&g.sketched)?;
    let w0 = pseudo_inverse_apply(&g.sketched, &gb)?;
    let y0 = pre.t.matvec(&w0)?;
    let warm_start_residual = residual(a, &w0, b)?;

    let m = sa.matmul(&pre.r)?;
    let gd = gd_lsq(&m, &sb, &y0, cfg.epsilon, cfg.c_it, cfg.cap)?;
    if gd.capped {
        flags.push("not-converged".into());
    }
    let mut y = pre.r.matvec(&gd.x)?;
    let mut res = residual(a, &y, b)?;
    if res > warm_start_residual {
        flags.push("warm-start-kept".into());
        y = w0;
        res = warm_start_residual;
    }
    let (oracle_residual, oracle_ratio) = if cfg.oracle {
        let (_, opt) = exact_lsq_oracle(a, b)?;
        let ratio = if opt > 0.0 { res / opt } else if res == 0.0 { 1.0 } else { f64::INFINITY };
        (Some(opt), Some(ratio))
    } else {
        (None, None)
    };
    Ok(RegressionResult {
        y,
        residual: res,
        iterations: gd.iterations,
        warm_start_residual,
        oracle_residual,
        oracle_ratio,
        kappa_sar: gd.kappa,
        rows_sketched: sketch.sample.len(),
        gd_trace: gd.trace,
        flags,
    })
}
