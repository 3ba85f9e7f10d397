//! Dense working-precision helpers shared by the other modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIG_EPS: f64 = f64::EPSILON;
const EIG_MAX_ITER: usize = 0; // unlimited
const JACOBI_MAX_SWEEPS: usize = 60;

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(a.clone(), EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(a.clone(), EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Spectral norm of a symmetric matrix, via its eigenvalues.
pub fn sym_norm2(a: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigenvalues(a)?;
    Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Column-orthogonalizing one-sided Jacobi on a matrix with at least as
/// many rows as columns. Returns `W = A V` with mutually orthogonal columns,
/// so that the column norms are the singular values.
fn jacobi_columns(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let tol = f64::EPSILON * (m as f64).sqrt();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (w.column(p), w.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
            }
        }
        if !rotated {
            return Ok(w);
        }
    }
    Err(Error::Numeric("Jacobi SVD did not converge".into()))
}

/// Singular values of a general matrix, sorted descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let tall = if a.nrows() >= a.ncols() { a.clone() } else { a.transpose() };
    let mut s: Vec<f64> = match jacobi_columns(&tall) {
        Ok(w) => w.column_iter().map(|c| c.norm()).collect(),
        Err(_) => a.singular_values().iter().copied().collect(),
    };
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Spectral norm of a general matrix.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Thin SVD `A = U diag(s) V^T` of a matrix with at least as many rows as
/// columns, singular values descending; returns `(U, s)`. Columns of `U`
/// belonging to negligible singular values complete an orthonormal set.
pub fn thin_svd_left(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::DimensionMismatch(format!("thin SVD needs rows >= columns, got {m} x {n}")));
    }
    let w = jacobi_columns(a)?;
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let top = order.first().map(|&i| norms[i]).unwrap_or(0.0);
    let negligible = m as f64 * f64::EPSILON * top;
    let mut u = DMatrix::zeros(m, n);
    let mut basis = 0;
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > negligible {
            u.set_column(dst, &(w.column(src) / norms[src]));
            continue;
        }
        // extend with the next coordinate vector independent of the columns so far
        loop {
            let mut v = DVector::zeros(m);
            v[basis % m] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for j in 0..dst {
                    let proj = u.column(j).dot(&v);
                    v -= u.column(j) * proj;
                }
            }
            let len = v.norm();
            if len > 0.5 || basis > 2 * m {
                u.set_column(dst, &(v / len));
                break;
            }
        }
    }
    let s = order.iter().map(|&i| norms[i]).collect();
    Ok((u, s))
}

/// Moore-Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
/// magnitude at most `n * u * max|lambda|` are treated as zero.
pub fn sym_pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(a)?;
    let n = a.nrows();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = n as f64 * f64::EPSILON / 2.0 * top;
    let inv = DVector::from_iterator(
        n,
        vals.iter()
            .map(|&v| if v.abs() > cutoff { 1.0 / v } else { 0.0 }),
    );
    Ok(&vecs * DMatrix::from_diagonal(&inv) * vecs.transpose())
}

/// Maximum entry of `|Q^T Q - I|`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let k = g.nrows();
    (g - DMatrix::<f64>::identity(k, k)).abs().max()
}

/// Lower Cholesky factor `L` with `L L^T = A`. Only the lower triangle of
/// `a` is read. Fails with the 0-based index of the first non-positive pivot.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch("Cholesky needs a square matrix".into()));
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Cholesky { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}
