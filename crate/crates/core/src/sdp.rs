//! Row reweighting by a packing SDP: minimise `λ_max(Σ wᵢ yᵢ yᵢᵀ)` over the
//! capped simplex `W = {Σ w = 1, 0 ≤ wᵢ ≤ 2/p}`.

use crate::error::{Error, Result};
use crate::linalg::{dot, spectral_norm_op, sym_eigen, DenseMatrix};

const FEASIBILITY_TOL: f64 = 1e-6;

/// Sampled rows expressed in an orthonormal basis of the target subspace.
///
/// Row `i` of `projected` holds the coordinates `Qᵀxᵢ`, so `yᵢ = Q Qᵀ xᵢ` and
/// `Σ wᵢ yᵢyᵢᵀ` has the same nonzero spectrum as `Σ wᵢ zᵢzᵢᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingInstance {
    projected: DenseMatrix,
    cap: f64,
}

impl PackingInstance {
    pub fn new(projected: DenseMatrix) -> Result<Self> {
        let p = projected.rows();
        if p == 0 {
            return Err(Error::InvalidParameter("packing instance needs p >= 1".into()));
        }
        Ok(Self { projected, cap: 2.0 / p as f64 })
    }

    pub fn p(&self) -> usize {
        self.projected.rows()
    }

    pub fn dim(&self) -> usize {
        self.projected.cols()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn projected(&self) -> &DenseMatrix {
        &self.projected
    }

    /// `Σ wᵢ zᵢ zᵢᵀ` as a dense `dim x dim` matrix.
    pub fn gram(&self, w: &[f64]) -> DenseMatrix {
        let d = self.dim();
        let mut g = vec![0.0; d * d];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let z = self.projected.row(i);
            for a in 0..d {
                let s = wi * z[a];
                if s == 0.0 {
                    continue;
                }
                for b in a..d {
                    g[a * d + b] += s * z[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[a * d + b] = g[b * d + a];
            }
        }
        DenseMatrix::from_vec(d, d, g).expect("finite gram")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    /// Validates `0 ≤ wᵢ ≤ (2/p)(1 + 1e-6)` and `|Σ wᵢ − 1| ≤ 1e-6`.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        check_feasible(&w)?;
        Ok(Self { w })
    }

    pub fn uniform(p: usize) -> Self {
        Self { w: vec![1.0 / p as f64; p] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        check_feasible(&self.w).is_ok()
    }
}

fn check_feasible(w: &[f64]) -> Result<()> {
    let p = w.len();
    if p == 0 {
        return Err(Error::InvalidParameter("empty weight vector".into()));
    }
    let cap = 2.0 / p as f64;
    if let Some((i, &v)) = w.iter().enumerate().find(|(_, &v)| !v.is_finite() || v < 0.0 || v > cap * (1.0 + FEASIBILITY_TOL)) {
        return Err(Error::InvalidParameter(format!("weight {i} = {v} outside [0, {cap}]")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::InvalidParameter(format!("weights sum to {sum}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionMethod {
    /// `zᵢ = Qᵀ xᵢ` directly.
    Exact,
    /// Gradient descent on `‖Q z − xᵢ‖²` until the gradient norm is below `gamma`.
    GradientDescent { gamma: f64 },
}

/// Projects the rows of `sampled_rows` (`p x ℓ`) onto the span of `basis_q`
/// (`ℓ x d`, orthonormal columns). `r` is the matching preconditioner with
/// `B r = Q`; only its shape is consulted.
pub fn build_packing_instance(
    sampled_rows: &DenseMatrix,
    basis_q: &DenseMatrix,
    r: &DenseMatrix,
    method: ProjectionMethod,
) -> Result<PackingInstance> {
    let (ell, d) = basis_q.shape();
    if sampled_rows.cols() != ell || r.cols() != d {
        return Err(Error::Shape(format!(
            "sampled rows {:?}, basis {:?}, preconditioner {:?}",
            sampled_rows.shape(),
            basis_q.shape(),
            r.shape()
        )));
    }
    let qtq = basis_q.t_matmul(basis_q)?;
    let orth_err = qtq.sub(&DenseMatrix::identity(d))?.max_abs();
    if orth_err > 1e-8 {
        return Err(Error::Basis(format!("basis columns are not orthonormal (max |QᵀQ − I| = {orth_err:.3e})")));
    }
    let exact = sampled_rows.matmul(basis_q)?;
    match method {
        ProjectionMethod::Exact => PackingInstance::new(exact),
        ProjectionMethod::GradientDescent { gamma } => {
            if gamma <= 0.0 {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
            }
            let p = sampled_rows.rows();
            let mut coords = DenseMatrix::zeros(p, d);
            for i in 0..p {
                let x = sampled_rows.row(i);
                let mut z = vec![0.0; d];
                for _ in 0..1000 {
                    let mut res = basis_q.matvec(&z)?;
                    res.iter_mut().zip(x).for_each(|(r, &xi)| *r -= xi);
                    let g = basis_q.t_matvec(&res)?;
                    if dot(&g, &g).sqrt() <= gamma {
                        break;
                    }
                    z.iter_mut().zip(&g).for_each(|(zi, gi)| *zi -= gi);
                }
                coords.row_mut(i).copy_from_slice(&z);
            }
            PackingInstance::new(coords)
        }
    }
}

/// Output of [`solve_packing_sdp`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub weights: WeightVector,
    /// `λ_max` at the returned weights.
    pub objective: f64,
    /// Certified lower bound on the optimum over `W`.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `λ_max` of every iterate, starting with the uniform weights.
    pub trace: Vec<f64>,
}

/// `2 λ_max` of uniform weights over all rows but the heaviest 1%.
pub fn default_target(inst: &PackingInstance) -> f64 {
    let p = inst.p();
    let drop = p / 100;
    let mut order: Vec<usize> = (0..p).collect();
    let norms: Vec<f64> = (0..p).map(|i| inst.projected.row_norm_sq(i)).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let keep = p - drop;
    let mut w = vec![0.0; p];
    for &i in &order[drop..] {
        w[i] = 1.0 / keep as f64;
    }
    2.0 * lambda_max(inst, &w)
}

fn lambda_max(inst: &PackingInstance, w: &[f64]) -> f64 {
    if inst.dim() == 0 {
        return 0.0;
    }
    let (vals, _) = sym_eigen(&inst.gram(w)).expect("square gram");
    vals[0].max(0.0)
}

struct Smoothed {
    value: f64,
    lambda: f64,
    grad: Vec<f64>,
    gram: DenseMatrix,
}

/// Potential and its derivative along `dmat` at `gram + t · dmat`, computed in
/// the `d`-dimensional space only.
fn along(gram: &DenseMatrix, dmat: &DenseMatrix, t: f64, mu: f64) -> Result<(f64, f64)> {
    let (vals, vecs) = sym_eigen(&gram.add(&dmat.scale(t))?)?;
    let top = vals[0];
    let ex: Vec<f64> = vals.iter().map(|&l| ((l - top) / mu).exp()).collect();
    let total: f64 = ex.iter().sum();
    let mut deriv = 0.0;
    for (j, e) in ex.iter().enumerate() {
        if e / total <= 1e-18 {
            continue;
        }
        let v = vecs.col(j);
        deriv += e / total * dot(&v, &dmat.matvec(&v)?);
    }
    Ok((top + mu * total.ln(), deriv))
}

/// Softmax-of-eigenvalues potential `μ log tr exp(G/μ)` and its gradient
/// `gᵢ = zᵢᵀ P zᵢ` with `P = exp(G/μ)/tr exp(G/μ)`.
fn smoothed(inst: &PackingInstance, w: &[f64], mu: f64) -> Result<Smoothed> {
    let gram = inst.gram(w);
    let (vals, vecs) = sym_eigen(&gram)?;
    let top = vals[0];
    let ex: Vec<f64> = vals.iter().map(|&l| ((l - top) / mu).exp()).collect();
    let total: f64 = ex.iter().sum();
    let pi: Vec<f64> = ex.iter().map(|e| e / total).collect();
    let active: Vec<usize> = (0..pi.len()).filter(|&j| pi[j] > 1e-18).collect();
    let zv = inst.projected.matmul(&vecs.select_cols(&active))?;
    let grad = (0..inst.p())
        .map(|i| zv.row(i).iter().zip(&active).map(|(c, &j)| pi[j] * c * c).sum())
        .collect();
    Ok(Smoothed { value: top + mu * total.ln(), lambda: top.max(0.0), grad, gram })
}

/// Vertex of `W` minimising `⟨g, s⟩`: the cap on the smallest gradients.
fn linear_oracle(g: &[f64], cap: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let mut s = vec![0.0; g.len()];
    let mut left = 1.0f64;
    for i in order {
        if left <= 0.0 {
            break;
        }
        let take = cap.min(left);
        s[i] = take;
        left -= take;
    }
    s
}

/// Minimises `λ_max(Σ wᵢ zᵢzᵢᵀ)` over `W` by Frank–Wolfe on a smoothed potential.
///
/// Stops once `λ_max ≤ (1 + accuracy) · max(target_c, lower_bound)`, where the lower
/// bound comes from the Frank–Wolfe duality gap and the smoothing error. With
/// `target_c = 0` this is plain minimisation to relative accuracy. Exhausting
/// `max_iter` returns the best iterate with `converged = false`.
pub fn solve_packing_sdp(inst: &PackingInstance, target_c: f64, accuracy: f64, max_iter: usize) -> Result<SdpSolution> {
    if !(accuracy > 0.0 && accuracy < 1.0) {
        return Err(Error::InvalidParameter(format!("accuracy must lie in (0, 1), got {accuracy}")));
    }
    if target_c.is_nan() || target_c < 0.0 {
        return Err(Error::InvalidParameter(format!("target must be nonnegative, got {target_c}")));
    }
    let p = inst.p();
    let cap = inst.cap();
    let d = inst.dim();
    let log_d = (d.max(2) as f64).ln();
    let mut w = vec![1.0 / p as f64; p];
    let lam0 = lambda_max(inst, &w);
    let mut trace = vec![lam0];
    if lam0 == 0.0 {
        return Ok(SdpSolution { weights: WeightVector { w }, objective: 0.0, lower_bound: 0.0, iterations: 0, converged: true, trace });
    }

    // Trace bound: λ_max ≥ tr/d, minimised over W by the linear oracle on row norms.
    let norms: Vec<f64> = (0..p).map(|i| inst.projected.row_norm_sq(i)).collect();
    let trace_lb = dot(&linear_oracle(&norms, cap), &norms) / d as f64;

    let mut mu = lam0 / (2.0 * log_d);
    let mut lower = trace_lb;
    let mut best = (lam0, w.clone());
    let mut state = smoothed(inst, &w, mu)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations <= max_iter {
        let s = linear_oracle(&state.grad, cap);
        let dir: Vec<f64> = s.iter().zip(&w).map(|(a, b)| a - b).collect();
        let gap = -dot(&state.grad, &dir);
        lower = lower.max(state.value - gap.max(0.0) - mu * log_d);
        if state.lambda <= (1.0 + accuracy) * target_c.max(lower) {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        iterations += 1;
        if gap <= mu * log_d {
            mu *= 0.5;
            state = smoothed(inst, &w, mu)?;
            continue;
        }

        // Bisection on the directional derivative of the convex potential.
        let at = |t: f64| -> Vec<f64> { w.iter().zip(&dir).map(|(wi, di)| (wi + t * di).max(0.0)).collect() };
        let dmat = inst.gram(&dir);
        let mut step = 1.0;
        if along(&state.gram, &dmat, 1.0, mu)?.1 > 0.0 {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..8 {
                let mid = 0.5 * (lo + hi);
                if along(&state.gram, &dmat, mid, mu)?.1 > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            step = lo.max(1e-6);
        }
        let mut next = smoothed(inst, &at(step), mu)?;
        let mut tries = 0;
        while next.value > state.value && tries < 20 {
            step *= 0.5;
            next = smoothed(inst, &at(step), mu)?;
            tries += 1;
        }
        if next.value > state.value {
            mu *= 0.5;
            state = smoothed(inst, &w, mu)?;
            continue;
        }
        w = at(step);
        state = next;
        trace.push(state.lambda);
        if state.lambda < best.0 {
            best = (state.lambda, w.clone());
        }
    }

    let (objective, mut w) = if state.lambda <= best.0 { (state.lambda, w) } else { best };
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v = (*v / sum).clamp(0.0, cap));
    check_feasible(&w)?;
    Ok(SdpSolution { weights: WeightVector { w }, objective, lower_bound: lower, iterations, converged, trace })
}

/// `λ_max(Σ wᵢ zᵢzᵢᵀ)` by power iteration on `diag(√w) Z` (tolerance 1e-6).
pub fn verify_weights(w: &WeightVector, inst: &PackingInstance) -> Result<f64> {
    if w.len() != inst.p() {
        return Err(Error::Shape(format!("{} weights for {} rows", w.len(), inst.p())));
    }
    let sw: Vec<f64> = w.as_slice().iter().map(|v| v.sqrt()).collect();
    let z = &inst.projected;
    let est = spectral_norm_op(
        inst.dim(),
        |x| Ok(z.matvec(x)?.iter().zip(&sw).map(|(a, s)| a * s).collect()),
        |y| {
            let scaled: Vec<f64> = y.iter().zip(&sw).map(|(a, s)| a * s).collect();
            z.t_matvec(&scaled)
        },
        1e-6,
        20_000,
        0,
    )?;
    Ok(est.value * est.value)
}
