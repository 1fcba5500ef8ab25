//! Dense symmetric eigenvalue computation and a small SPD solver.
//!
//! The matrices here are tiny (a network of n nodes yields a 2n x 2n Fisher
//! matrix, n rarely above 20), so an O(n^3) Householder tridiagonalization
//! followed by implicit-shift QL iteration is more than fast enough and keeps
//! the dependency footprint at zero. The QL recurrence follows the classic
//! Bowdler-Martin-Reinsch-Wilkinson Algol procedures (tql2 lineage), values
//! only, with no eigenvector accumulation.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("QL iteration failed to converge")]
    ConvergenceFailed,
    #[error("matrix data length {len} does not match dimension {dim}")]
    ShapeMismatch { len: usize, dim: usize },
}

/// All eigenvalues of a symmetric matrix, ascending.
///
/// `matrix` is row-major `dim x dim`; only the lower triangle is read, so
/// mildly asymmetric input is treated as its lower-triangular symmetrization.
/// Deterministic for identical input.
pub fn symmetric_eigenvalues(matrix: &[f64], dim: usize) -> Result<Vec<f64>, LinalgError> {
    if matrix.len() != dim * dim {
        return Err(LinalgError::ShapeMismatch {
            len: matrix.len(),
            dim,
        });
    }
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut a = matrix.to_vec();
    // Mirror the lower triangle so the reduction can read either half.
    for r in 0..dim {
        for c in (r + 1)..dim {
            a[r * dim + c] = a[c * dim + r];
        }
    }
    let (mut d, mut e) = tridiagonalize(&mut a, dim);
    ql_implicit_shift(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Householder reduction to tridiagonal form. Returns (diagonal, subdiagonal)
/// with `e[i]` the coupling between `d[i]` and `d[i+1]` and `e[dim-1] = 0`.
fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating column k below the subdiagonal.
        let mut norm_sq = 0.0;
        for i in (k + 1)..n {
            let x = a[i * n + k];
            norm_sq += x * x;
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in (k + 1)..n {
            v[i] = a[i * n + k];
        }
        v[k + 1] -= alpha;
        let vtv = norm_sq - 2.0 * alpha * x0 + alpha * alpha;
        if vtv == 0.0 {
            e[k] = alpha;
            continue;
        }
        let beta = 2.0 / vtv;

        // Symmetric rank-2 update: A <- A - v w^T - w v^T on the trailing block,
        // with p = beta A v and w = p - (beta/2)(v^T p) v.
        for i in (k + 1)..n {
            let mut s = 0.0;
            for j in (k + 1)..n {
                s += a[i * n + j] * v[j];
            }
            p[i] = beta * s;
        }
        let mut vtp = 0.0;
        for i in (k + 1)..n {
            vtp += v[i] * p[i];
        }
        let gamma = 0.5 * beta * vtp;
        for i in (k + 1)..n {
            p[i] -= gamma * v[i];
        }
        for i in (k + 1)..n {
            for j in (k + 1)..=i {
                a[i * n + j] -= v[i] * p[j] + p[i] * v[j];
                a[j * n + i] = a[i * n + j];
            }
        }
        a[(k + 1) * n + k] = alpha;
        a[k * n + (k + 1)] = alpha;
        for i in (k + 2)..n {
            a[i * n + k] = 0.0;
            a[k * n + i] = 0.0;
        }
        e[k] = alpha;
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    e[n - 1] = 0.0;
    let d = (0..n).map(|i| a[i * n + i]).collect();
    (d, e)
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix.
fn ql_implicit_shift(d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(LinalgError::ConvergenceFailed);
                }

                // Implicit shift from the leading 2x2.
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
                for v in d.iter_mut().skip(l + 2) {
                    *v -= h;
                }
                f += h;

                // Implicit QL sweep from m down to l.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
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
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n x n`),
/// overwriting `b` with the solution. Returns false on a non-positive pivot.
pub fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return false;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / diag;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}
