//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition,
//! a Cholesky-based definiteness test, and spectral helpers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::normal_vec;

/// Largest dimension accepted by [`jacobi_eigh`].
pub const MAX_DIM: usize = 64;
const OFF_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const SYM_TOL: f64 = 1e-10;

fn max_asymmetry(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

fn off_diag_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Eigendecomposition `S = Q diag(λ) Qᵀ` of a symmetric matrix by cyclic
/// Jacobi rotations. Eigenvalues are returned in ascending order with the
/// columns of `Q` permuted to match.
pub fn jacobi_eigh(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimMismatch { expected: n, got: s.ncols() });
    }
    if n > MAX_DIM {
        return Err(Error::TooLarge(format!("eigensolver dimension {n} > {MAX_DIM}")));
    }
    let scale = s.norm().max(1.0);
    let asym = max_asymmetry(s);
    if asym > SYM_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = (s + s.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = OFF_TOL * a.norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diag_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diag_norm(&a) > target {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let lambda = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let q = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((q, lambda))
}

/// Cholesky attempt; `true` iff every pivot exceeds `1e-12` (relative to the
/// largest diagonal entry when that exceeds one).
pub fn is_positive_definite(x: &DMatrix<f64>) -> bool {
    let n = x.nrows();
    if x.ncols() != n {
        return false;
    }
    let scale = (0..n).map(|i| x[(i, i)].abs()).fold(1.0f64, f64::max);
    let tol = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = x[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > tol) {
            return false;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (x[(i, j)] + x[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    true
}

/// Frobenius inner product `⟨A, B⟩ = Tr(AᵀB)`.
pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Q diag(f(λ)) Qᵀ`.
pub fn spectral_apply(q: &DMatrix<f64>, lambda: &DVector<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = q.nrows();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &l) in lambda.iter().enumerate() {
        let w = f(l);
        for i in 0..n {
            let qi = q[(i, k)] * w;
            for j in 0..n {
                out[(i, j)] += qi * q[(j, k)];
            }
        }
    }
    out
}

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_vec(n, n, normal_vec(rng, n * n));
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let mut col = g.column(j).into_owned();
            for k in 0..j {
                let proj = q.column(k).dot(&col);
                col -= q.column(k) * proj;
            }
            let norm = col.norm();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.set_column(j, &(col / norm));
        }
        if ok {
            return q;
        }
    }
}

/// Random symmetric matrix with unit Frobenius norm.
pub fn random_symmetric_unit<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_vec(n, n, normal_vec(rng, n * n));
        let s = (&g + g.transpose()) * 0.5;
        let norm = s.norm();
        if norm > 1e-12 {
            return s / norm;
        }
    }
}
