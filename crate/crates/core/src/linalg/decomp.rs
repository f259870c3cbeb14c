//! Deterministic dense factorizations: Householder QR, one-sided Jacobi SVD,
//! cyclic Jacobi for symmetric eigenproblems, and triangular solves.

use crate::error::{shape_err, Error, Result};

use super::dense::{dot, DenseMatrix};

/// Default multiplier in the numerical-rank threshold
/// `tol_factor * max(n, d) * eps * sigma_max`.
pub const RANK_TOL_FACTOR: f64 = 10.0;

const MAX_JACOBI_SWEEPS: usize = 80;

pub fn rank_threshold(sigma_max: f64, rows: usize, cols: usize, tol_factor: f64) -> f64 {
    tol_factor * rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Thin QR of a tall matrix: `m = q * t` with `q` orthonormal columns and `t`
/// upper triangular.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub t: DenseMatrix,
}

fn to_columns(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.cols()).map(|j| a.col(j)).collect()
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn householder_qr(m: &DenseMatrix) -> Result<QrFactors> {
    let (p, d) = m.shape();
    if p < d {
        return shape_err(format!("householder_qr needs rows >= cols, got {p}x{d}"));
    }
    let mut cols = to_columns(m);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let norm = cols[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = cols[j][j..].to_vec();
        if norm == 0.0 {
            reflectors.push(vec![0.0; p - j]);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(vec![0.0; p - j]);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        for col in cols.iter_mut().skip(j) {
            let proj = 2.0 * dot(&v, &col[j..]);
            if proj != 0.0 {
                for (c, &vi) in col[j..].iter_mut().zip(&v) {
                    *c -= proj * vi;
                }
            }
        }
        reflectors.push(v);
    }
    let t = DenseMatrix::from_fn(d, d, |i, j| if i <= j { cols[j][i] } else { 0.0 });

    // Q = H_0 H_1 ... H_{d-1} applied to the first d columns of the identity.
    let mut qcols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            e
        })
        .collect();
    for (j, v) in reflectors.iter().enumerate().rev() {
        for col in qcols.iter_mut() {
            let proj = 2.0 * dot(v, &col[j..]);
            if proj != 0.0 {
                for (c, &vi) in col[j..].iter_mut().zip(v) {
                    *c -= proj * vi;
                }
            }
        }
    }
    Ok(QrFactors { q: from_columns(p, &qcols), t })
}

/// Singular value decomposition `A = U diag(sigma) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let us = self.u.scale_rows_cols(&self.sigma);
        us.matmul(&self.v.transpose()).expect("consistent factor shapes")
    }
}

impl DenseMatrix {
    /// Scales column `j` by `s[j]`.
    pub fn scale_rows_cols(&self, s: &[f64]) -> DenseMatrix {
        assert_eq!(s.len(), self.cols());
        DenseMatrix::from_fn(self.rows(), self.cols(), |i, j| self.get(i, j) * s[j])
    }
}

/// One-sided (Hestenes) Jacobi on the columns of `w`, accumulating the right
/// rotations into `v`. On return the columns of `w` are mutually orthogonal.
fn one_sided_jacobi(w: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = w.len();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = w.split_at_mut(j);
                for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
                let (lo, hi) = v.split_at_mut(j);
                for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Full (untruncated) thin SVD with `min(n, d)` singular values, sorted
/// nonincreasing. Columns of `u` for zero singular values are zero.
fn svd_full(a: &DenseMatrix) -> Result<SvdFactors> {
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (n, d) = a.shape();
    if n < d {
        let t = svd_full(&a.transpose())?;
        return Ok(SvdFactors { u: t.v, sigma: t.sigma, v: t.u });
    }
    if d == 0 {
        return Ok(SvdFactors { u: DenseMatrix::zeros(n, 0), sigma: vec![], v: DenseMatrix::zeros(0, 0) });
    }
    let qr = householder_qr(a)?;
    let mut w = to_columns(&qr.t);
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();
    one_sided_jacobi(&mut w, &mut v);

    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let ut_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| if norms[j] > 0.0 { w[j].iter().map(|x| x / norms[j]).collect() } else { vec![0.0; d] })
        .collect();
    let v_cols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    let u = qr.q.matmul(&from_columns(d, &ut_cols))?;
    Ok(SvdFactors { u, sigma, v: from_columns(d, &v_cols) })
}

/// All `min(n, d)` singular values, nonincreasing.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd_full(a)?.sigma)
}

/// Thin SVD truncated at the numerical rank (default tolerance factor), so
/// `u` and `v` have exactly orthonormal columns. The zero matrix yields `k = 0`.
pub fn svd_thin(a: &DenseMatrix) -> Result<SvdFactors> {
    svd_thin_tol(a, RANK_TOL_FACTOR)
}

pub fn svd_thin_tol(a: &DenseMatrix, tol_factor: f64) -> Result<SvdFactors> {
    let full = svd_full(a)?;
    let smax = full.sigma.first().copied().unwrap_or(0.0);
    let thr = rank_threshold(smax, a.rows(), a.cols(), tol_factor);
    let k = full.sigma.iter().take_while(|&&s| s > thr && s > 0.0).count();
    let keep: Vec<usize> = (0..k).collect();
    Ok(SvdFactors { u: full.u.select_cols(&keep), sigma: full.sigma[..k].to_vec(), v: full.v.select_cols(&keep) })
}

/// Eigen-decomposition of a symmetric matrix: Householder reduction to
/// tridiagonal form followed by implicit QL. Eigenvalues are returned
/// nonincreasing with eigenvectors as the matching columns.
pub fn sym_eigen(s: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = s.rows();
    if s.cols() != n {
        return shape_err(format!("sym_eigen needs a square matrix, got {:?}", s.shape()));
    }
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (s.get(i, j) + s.get(j, i))).collect()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[y].total_cmp(&d[x]).then(x.cmp(&y)));
    let vecs = DenseMatrix::from_fn(n, n, |i, j| v[i][order[j]]);
    Ok((order.iter().map(|&i| d[i]).collect(), vecs))
}

fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d[..n].copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d[..i].iter_mut() {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = if f > 0.0 { -h.sqrt() } else { h.sqrt() };
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let g: f64 = (0..=i).map(|k| v[k][i + 1] * v[k][j]).sum();
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > f64::EPSILON * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 100 {
                    return Err(Error::NonFinite("symmetric eigensolver did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("non-finite eigenvalue".into()));
    }
    Ok(())
}

/// Solves `t x = b` for upper-triangular `t`.
pub fn solve_upper(t: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = t.rows();
    if t.cols() != n || b.len() != n {
        return shape_err(format!("solve_upper {:?} with rhs {}", t.shape(), b.len()));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| t.get(i, j) * x[j]).sum();
        let diag = t.get(i, i);
        if diag == 0.0 {
            return Err(Error::RankDeficient(format!("zero pivot at {i}")));
        }
        x[i] = (b[i] - s) / diag;
    }
    Ok(x)
}

/// Inverse of an upper-triangular matrix (itself upper triangular).
pub fn upper_inverse(t: &DenseMatrix) -> Result<DenseMatrix> {
    let n = t.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_upper(t, &e)?;
        for (i, v) in col.into_iter().enumerate() {
            if i <= j {
                inv.set(i, j, v);
            }
        }
    }
    Ok(inv)
}
