//! Small dense linear-algebra helpers shared across modules.
//!
//! Desk scale here means symmetric matrices up to a few thousand rows, so
//! full factorizations are always affordable and preferred over iterative
//! methods.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues only, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Operator norm of a symmetric matrix.
pub fn opnorm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Solves `a x = b` for symmetric positive-definite `a` via Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky failed: matrix not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Spectral pseudo-solve `a⁺ b` for symmetric PSD `a`, dropping eigenvalues
/// below `rel_cutoff * λ_max`.
pub fn psd_pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let (vals, vecs) = sym_eigen(a);
    let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_cutoff * lmax;
    let mut x = DVector::zeros(b.len());
    for (i, &v) in vals.iter().enumerate() {
        if v > cutoff {
            let u = vecs.column(i);
            x += u * (u.dot(b) / v);
        }
    }
    x
}

/// Symmetric inverse square root `a^{-1/2}` of a positive-definite matrix.
///
/// Refuses if the smallest eigenvalue falls below `rel_floor * λ_max`, since
/// whitening by a near-singular matrix amplifies noise in null directions.
pub fn inv_sqrt_pd(a: &DMatrix<f64>, rel_floor: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(a);
    let n = vals.len();
    let lmax = vals[n - 1];
    let lmin = vals[0];
    if !(lmax > 0.0) || lmin < rel_floor * lmax {
        return Err(Error::Singular(format!(
            "inverse square root refused: λ_min = {lmin:.3e}, λ_max = {lmax:.3e}, floor = {:.3e}",
            rel_floor * lmax
        )));
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let u = vecs.column(i);
        out += u * u.transpose() / vals[i].sqrt();
    }
    Ok(out)
}
