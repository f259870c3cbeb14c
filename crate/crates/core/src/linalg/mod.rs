//! Dense and sparse containers plus the exact routines used both inside the
//! sketching pipeline and as ground truth in tests.

mod decomp;
mod dense;
mod sparse;

pub use decomp::{
    householder_qr, rank_threshold, singular_values, solve_upper, svd_thin, svd_thin_tol, sym_eigen, upper_inverse, QrFactors,
    SvdFactors, RANK_TOL_FACTOR,
};
pub use dense::{dot, norm2, DenseMatrix, MatrixInput};
pub use sparse::{matmul, Matrix, SparseMatrix};

use crate::error::{Error, Result};
use crate::rng::{self, Module};

/// QR-based right preconditioner: `m * r = q` with `q` orthonormal and `r`
/// the inverse of the triangular factor.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// The triangular factor itself, `r⁻¹`.
    pub t: DenseMatrix,
}

/// Fails with `RankDeficient` when `m` has numerical rank below its column count.
pub fn qr_preconditioner(m: &DenseMatrix) -> Result<Preconditioner> {
    let (p, d) = m.shape();
    if p < d {
        return Err(Error::RankDeficient(format!("{p} rows cannot have rank {d}")));
    }
    let qr = householder_qr(m)?;
    let rank = numerical_rank(&qr.t, RANK_TOL_FACTOR)?;
    if rank < d {
        return Err(Error::RankDeficient(format!("numerical rank {rank} < {d} columns")));
    }
    let r = upper_inverse(&qr.t)?;
    Ok(Preconditioner { q: qr.q, r, t: qr.t })
}

/// Number of singular values above `tol_factor * max(n, d) * eps * sigma_max`.
pub fn numerical_rank(a: &DenseMatrix, tol_factor: f64) -> Result<usize> {
    if tol_factor <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol_factor must be positive, got {tol_factor}")));
    }
    let sv = singular_values(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let thr = rank_threshold(smax, a.rows(), a.cols(), tol_factor);
    Ok(sv.iter().filter(|&&s| s > thr && s > 0.0).count())
}

/// Squared row norms of the left singular factor (numerical-rank truncated).
pub fn exact_leverage_scores(a: &DenseMatrix) -> Result<Vec<f64>> {
    let f = svd_thin(a)?;
    Ok((0..a.rows()).map(|i| f.u.row_norm_sq(i)).collect())
}

/// Power-iteration estimate of the largest singular value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Estimates `sigma_max(a)` by power iteration on `aᵀa` from a seeded Gaussian
/// start. Stops once the extrapolated error (successive change scaled by the
/// observed contraction rate) drops below `tol` relative.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<SpectralEstimate> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    spectral_norm_op(a.cols(), |x| a.matvec(x), |y| a.t_matvec(y), tol, max_iter, seed)
}

/// Operator form of [`spectral_norm`]: `apply` computes `A x`, `apply_t` computes `Aᵀ y`.
pub fn spectral_norm_op(
    dim: usize,
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    apply_t: impl Fn(&[f64]) -> Result<Vec<f64>>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    if dim == 0 {
        return Ok(SpectralEstimate { value: 0.0, converged: true, iterations: 0 });
    }
    let mut rng = rng::stream(seed, Module::PowerIteration, 0);
    let mut x = rng::gaussian_vec(&mut rng, dim);
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut prev = 0.0f64;
    let mut prev_delta = f64::INFINITY;
    let mut best = 0.0f64;
    for it in 1..=max_iter.max(1) {
        let y = apply(&x)?;
        let sigma = norm2(&y);
        best = best.max(sigma);
        if sigma == 0.0 {
            return Ok(SpectralEstimate { value: 0.0, converged: true, iterations: it });
        }
        let mut z = apply_t(&y)?;
        let nz = norm2(&z);
        if nz == 0.0 {
            return Ok(SpectralEstimate { value: best, converged: true, iterations: it });
        }
        z.iter_mut().for_each(|v| *v /= nz);
        x = z;

        let delta = (sigma - prev).abs();
        if it > 2 {
            let rate = (delta / prev_delta).min(0.999);
            let err = delta * rate / (1.0 - rate);
            if err <= tol * sigma && delta <= tol * sigma {
                return Ok(SpectralEstimate { value: best, converged: true, iterations: it });
            }
        }
        prev_delta = delta.max(f64::MIN_POSITIVE);
        prev = sigma;
    }
    Ok(SpectralEstimate { value: best, converged: false, iterations: max_iter.max(1) })
}

/// `sigma_max / sigma_min` of a sketched orthonormal basis; `+inf` when the
/// smallest singular value falls below the rank tolerance.
pub fn distortion(sketched_basis: &DenseMatrix) -> Result<f64> {
    let sv = singular_values(sketched_basis)?;
    let (Some(&smax), Some(&smin)) = (sv.first(), sv.last()) else {
        return Ok(f64::INFINITY);
    };
    if sketched_basis.rows() < sketched_basis.cols() {
        return Ok(f64::INFINITY);
    }
    let thr = rank_threshold(smax, sketched_basis.rows(), sketched_basis.cols(), RANK_TOL_FACTOR);
    if smax == 0.0 || smin <= thr {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Minimum-norm least-squares solution of `m x ≈ v` via the truncated SVD.
pub fn pseudo_inverse_apply(m: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != m.rows() {
        return Err(Error::Shape(format!("rhs length {} for {:?}", v.len(), m.shape())));
    }
    let f = svd_thin(m)?;
    let mut coef = f.u.t_matvec(v)?;
    for (c, s) in coef.iter_mut().zip(&f.sigma) {
        *c /= s;
    }
    f.v.matvec(&coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut r = rng::stream(seed, Module::Bench, 99);
        DenseMatrix::from_fn(n, d, |_, _| rng::gaussian(&mut r))
    }

    #[test]
    fn preconditioner_of_orthonormal_is_signed_identity() {
        let q = svd_thin(&gaussian(10, 3, 1)).unwrap().u;
        let p = qr_preconditioner(&q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = p.r.get(i, j);
                if i == j {
                    assert!((v.abs() - 1.0).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
        assert!((distortion(&q.matmul(&p.r).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preconditioner_of_diagonal() {
        let m = DenseMatrix::from_diag(&[2.0, 4.0]);
        let p = qr_preconditioner(&m).unwrap();
        assert!((p.r.get(0, 0).abs() - 0.5).abs() < 1e-15);
        assert!((p.r.get(1, 1).abs() - 0.25).abs() < 1e-15);
        assert_eq!(p.r.get(0, 1), 0.0);
    }

    #[test]
    fn preconditioner_of_gaussian_is_perfectly_conditioned() {
        let m = gaussian(64, 16, 2);
        let p = qr_preconditioner(&m).unwrap();
        let mr = m.matmul(&p.r).unwrap();
        assert!((distortion(&mr).unwrap() - 1.0).abs() < 1e-6);
        assert!(mr.rel_diff(&p.q) < 1e-8);
        let g = p.q.t_matmul(&p.q).unwrap();
        assert!(g.sub(&DenseMatrix::identity(16)).unwrap().max_abs() < 1e-9);
        for i in 0..16 {
            for j in 0..i {
                assert_eq!(p.r.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn preconditioner_rejects_rank_deficient() {
        let mut m = gaussian(8, 3, 3);
        for i in 0..8 {
            let v = m.get(i, 0);
            m.set(i, 2, 2.0 * v);
        }
        let err = qr_preconditioner(&m).unwrap_err();
        assert!(err.to_string().starts_with("rank-deficient"));
    }

    #[test]
    fn svd_examples() {
        let s = svd_thin(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.sigma.len(), 2);
        assert!((s.sigma[0] - 3.0).abs() < 1e-15 && (s.sigma[1] - 1.0).abs() < 1e-15);
        let a = gaussian(20, 7, 4);
        let f = svd_thin(&a).unwrap();
        assert!(f.reconstruct().sub(&a).unwrap().frobenius_norm() <= 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn leverage_examples() {
        let s = exact_leverage_scores(&DenseMatrix::identity(4)).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let s = exact_leverage_scores(&DenseMatrix::column(&[1.0, 1.0])).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DenseMatrix::identity(5), 10.0).unwrap(), 5);
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, 4.0, -1.0];
        let outer = DenseMatrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        assert_eq!(numerical_rank(&outer, 10.0).unwrap(), 1);
        let block = gaussian(4, 6, 5);
        let stacked = block.vstack(&block).unwrap().vstack(&block).unwrap();
        assert_eq!(numerical_rank(&stacked, 10.0).unwrap(), 4);
        assert!(numerical_rank(&block, 0.0).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        let tol = 1e-6;
        let e = spectral_norm(&DenseMatrix::from_diag(&[5.0, 1.0]), tol, 1000, 1).unwrap();
        assert!((e.value - 5.0).abs() <= 5.0 * tol && e.converged);
        let e = spectral_norm(&DenseMatrix::zeros(3, 3), tol, 100, 1).unwrap();
        assert_eq!(e.value, 0.0);
        let a = gaussian(50, 20, 6);
        let smax = singular_values(&a).unwrap()[0];
        let e = spectral_norm(&a, tol, 10_000, 7).unwrap();
        assert!(((e.value - smax) / smax).abs() <= tol, "{} vs {smax}", e.value);
        let e2 = spectral_norm(&a, tol, 10_000, 7).unwrap();
        assert_eq!(e, e2);
    }

    #[test]
    fn spectral_norm_flags_non_convergence() {
        let a = DenseMatrix::from_diag(&[1.0, 0.999_999, 0.5]);
        let e = spectral_norm(&a, 1e-14, 3, 2).unwrap();
        assert!(!e.converged);
        assert!(e.value > 0.5);
    }

    #[test]
    fn distortion_examples() {
        let q = svd_thin(&gaussian(12, 4, 8)).unwrap().u;
        assert!((distortion(&q).unwrap() - 1.0).abs() < 1e-12);
        assert!((distortion(&q.scale(2.0)).unwrap() - 1.0).abs() < 1e-12);
        let mut def = q.clone();
        for i in 0..12 {
            let v = def.get(i, 0);
            def.set(i, 1, v);
        }
        assert!(distortion(&def).unwrap().is_infinite());
    }

    #[test]
    fn pseudo_inverse_examples() {
        let v = [1.5, -2.0, 0.25];
        let x = pseudo_inverse_apply(&DenseMatrix::identity(3), &v).unwrap();
        assert!(x.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-15));
        let m = DenseMatrix::column(&[1.0, 1.0]);
        assert!((pseudo_inverse_apply(&m, &[1.0, 1.0]).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(pseudo_inverse_apply(&m, &[1.0, -1.0]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn pseudo_inverse_is_locally_optimal() {
        let m = gaussian(15, 4, 9);
        let v: Vec<f64> = gaussian(15, 1, 10).into_data();
        let x = pseudo_inverse_apply(&m, &v).unwrap();
        let resid = |x: &[f64]| {
            let r = m.matvec(x).unwrap();
            r.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let base = resid(&x);
        let mut r = rng::stream(11, Module::Bench, 0);
        for _ in 0..100 {
            let pert: Vec<f64> = x.iter().map(|xi| xi + 1e-3 * (r.random::<f64>() - 0.5)).collect();
            assert!(base <= resid(&pert) + 1e-14);
        }
    }
}
