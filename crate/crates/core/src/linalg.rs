//! Dense symmetric linear algebra: eigendecomposition and Cholesky solves.
//!
//! Matrices are square `n x n` `f64` slices in row-major order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Symmetric eigensolver backends. Both are deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Householder tridiagonalization followed by implicit QL.
    #[default]
    TridiagonalQl,
    /// Cyclic Jacobi rotations; slower, used for small problems and cross-checks.
    Jacobi,
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    /// Eigenvector `j` is `vectors[j * n..(j + 1) * n]`.
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

pub fn symmetric_eigen(a: &[f64], n: usize, solver: EigenSolver) -> Result<SymmetricEigen> {
    if n == 0 || a.len() != n * n {
        return Err(Error::Shape(alloc::format!(
            "eigendecomposition needs an n x n matrix, got {} values for n = {n}",
            a.len()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("matrix contains non-finite entries".into()));
    }
    let mut eig = match solver {
        EigenSolver::TridiagonalQl => tridiagonal_ql(a, n)?,
        EigenSolver::Jacobi => jacobi(a, n)?,
    };
    sort_ascending(&mut eig);
    Ok(eig)
}

fn sort_ascending(eig: &mut SymmetricEigen) {
    let n = eig.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.values[i].total_cmp(&eig.values[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.values[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&eig.vectors[i * n..(i + 1) * n]);
    }
    eig.values = values;
    eig.vectors = vectors;
}

// Column-major accessors: `v[col * n + row]` holds V[row][col], so the
// inner loops below (over rows) walk contiguous memory.
fn tridiagonal_ql(a: &[f64], n: usize) -> Result<SymmetricEigen> {
    let mut v = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..n {
            // symmetric: store A itself (V starts as A)
            v[c * n + r] = 0.5 * (a[r * n + c] + a[c * n + r]);
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;
    Ok(SymmetricEigen {
        n,
        values: d,
        vectors: v,
    })
}

#[inline]
fn at(n: usize, row: usize, col: usize) -> usize {
    col * n + row
}

fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[at(n, n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(n, i - 1, j)];
                v[at(n, i, j)] = 0.0;
                v[at(n, j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[at(n, j, i)] = f;
                let mut g = e[j] + v[at(n, j, j)] * f;
                let col = &v[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let col = &mut v[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(n, i - 1, j)];
                v[at(n, i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the transformations.
    for i in 0..n - 1 {
        v[at(n, n - 1, i)] = v[at(n, i, i)];
        v[at(n, i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(n, k, i + 1)] / h;
            }
            for j in 0..=i {
                let (left, right) = v.split_at_mut((i + 1) * n);
                let next = &right[..=i];
                let col = &mut left[j * n..j * n + i + 1];
                let g: f64 = next.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for k in 0..=i {
                    col[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(n, k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n, n - 1, j)];
        v[at(n, n - 1, j)] = 0.0;
    }
    v[at(n, n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

const QL_MAX_ITER: usize = 64;

fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] == 0, so m < n always
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::Fit(alloc::format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
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
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (left, right) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut left[i * n..];
                    let col_next = &mut right[..n];
                    for (vi, vn) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let hk = *vn;
                        *vn = s * *vi + c * hk;
                        *vi = c * *vi - s * hk;
                    }
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

const JACOBI_MAX_SWEEPS: usize = 100;

fn jacobi(a: &[f64], n: usize) -> Result<SymmetricEigen> {
    let mut m: Vec<f64> = (0..n * n)
        .map(|k| {
            let (r, c) = (k / n, k % n);
            0.5 * (a[r * n + c] + a[c * n + r])
        })
        .collect();
    // column-major eigenvector store, starts as identity
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= 1e-30 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[p * n + k];
                    let vkq = v[q * n + k];
                    v[p * n + k] = c * vkp - s * vkq;
                    v[q * n + k] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Fit("Jacobi sweeps did not converge".into()));
    }
    Ok(SymmetricEigen {
        n,
        values: (0..n).map(|i| m[i * n + i]).collect(),
        vectors: v,
    })
}

/// Solves `a x = b` for symmetric positive definite `a` (`n x n`) and a
/// right-hand side with `m` columns (`b` is `n x m`, overwritten with `x`).
pub fn cholesky_solve(a: &[f64], n: usize, b: &mut [f64], m: usize) -> Result<()> {
    if a.len() != n * n || b.len() != n * m {
        return Err(Error::Shape(alloc::format!(
            "cholesky_solve: system {n}x{n} with {m} right-hand sides does not match buffers"
        )));
    }
    // lower factor, row-major
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = l[i * n..i * n + j]
                .iter()
                .zip(&l[j * n..j * n + j])
                .map(|(x, y)| x * y)
                .sum();
            let s = a[i * n + j] - dot;
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Singular(alloc::format!(
                        "matrix is not positive definite (pivot {i} = {s:e}); use a nonzero ridge"
                    )));
                }
                l[i * n + i] = libm::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward: L y = b
    for i in 0..n {
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                for c in 0..m {
                    b[i * m + c] -= lik * b[k * m + c];
                }
            }
        }
        let inv = 1.0 / l[i * n + i];
        for c in 0..m {
            b[i * m + c] *= inv;
        }
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[k * n + i];
            if lki != 0.0 {
                for c in 0..m {
                    b[i * m + c] -= lki * b[k * m + c];
                }
            }
        }
        let inv = 1.0 / l[i * n + i];
        for c in 0..m {
            b[i * m + c] *= inv;
        }
    }
    Ok(())
}
