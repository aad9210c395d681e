//! Gaussian and sub-Gaussian design model: sampling, ridge regression, and
//! exact empirical bias/variance.
//!
//! Data model: `y = Z β* + w` with rows `z_i` independent, `E z_i = 0`,
//! `E z_i z_iᵀ = Σ = diag(σ)`, and noise `w_i` of variance `τ²`. The ridge
//! estimator is
//!
//! ```text
//! β̂(λ) = (ZᵀZ/n + λI)⁻¹ Zᵀy/n ,
//! ```
//!
//! with the `λ = 0+` minimum-norm interpolator implemented as a spectral
//! pseudoinverse with singular-value cutoff `1e-10 · σ_max` (the ridgeless
//! limit is a distinct estimator, not a tiny ridge). Conditional on `Z`, the
//! noise-averaged excess risk splits exactly as `B + V` with
//!
//! ```text
//! B(λ; Z, β*) = λ² ⟨β*, S_λ Σ S_λ β*⟩ ,   V(λ; Z) = (τ²/n) Tr(S_λ² (ZᵀZ/n) Σ) ,
//! ```
//!
//! where `S_λ = (ZᵀZ/n + λI)⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::mc::replica_rng;
use crate::spectrum::SpectralModel;

/// Relative singular-value cutoff for the ridgeless pseudoinverse.
pub const RIDGELESS_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    Gaussian,
    /// Independent coordinates in `{−σ_k^{1/2}, +σ_k^{1/2}}`: the simplest
    /// sub-Gaussian universality testbed.
    Rademacher,
}

/// One draw of the design model.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSample {
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub tau: f64,
    pub kind: DesignKind,
}

impl DesignSample {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// Assembles a sample from raw parts (test oracles, latent model).
    pub fn from_parts(z: DMatrix<f64>, y: DVector<f64>, tau: f64) -> Self {
        let n = z.nrows();
        DesignSample { z, y, w: DVector::zeros(n), tau, kind: DesignKind::Gaussian }
    }
}

/// Draws `n` rows from the design model. Same seed, same bytes.
pub fn sample_design(
    model: &SpectralModel,
    n: usize,
    tau: f64,
    kind: DesignKind,
    seed: u64,
) -> Result<DesignSample> {
    sample_design_with_rng(model, n, tau, kind, &mut replica_rng(seed, 0))
}

/// Same as [`sample_design`] but drawing from a caller-owned RNG (replica use).
pub fn sample_design_with_rng<R: Rng>(
    model: &SpectralModel,
    n: usize,
    tau: f64,
    kind: DesignKind,
    rng: &mut R,
) -> Result<DesignSample> {
    if n == 0 {
        return Err(Error::invalid("n must be ≥ 1"));
    }
    if tau < 0.0 {
        return Err(Error::invalid(format!("negative tau: {tau}")));
    }
    let p = model.p();
    let sqrt_sigma: Vec<f64> = model.sigma().iter().map(|s| s.sqrt()).collect();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let v = match kind {
                DesignKind::Gaussian => {
                    let g: f64 = rng.sample(StandardNormal);
                    sqrt_sigma[j] * g
                }
                DesignKind::Rademacher => {
                    if rng.gen::<bool>() {
                        sqrt_sigma[j]
                    } else {
                        -sqrt_sigma[j]
                    }
                }
            };
            z[(i, j)] = v;
        }
    }
    let beta = DVector::from_column_slice(model.beta());
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        w[i] = tau * g;
    }
    let y = &z * &beta + &w;
    Ok(DesignSample { z, y, w, tau, kind })
}

/// Eigendecomposition of `M = ZᵀZ/n` represented on the cheaper Gram side.
///
/// `vecs` holds orthonormal eigenvectors of `M` in `R^p` as columns, `vals`
/// the matching eigenvalues (descending). For `p > n` only the (at most `n`)
/// nonzero eigenpairs are materialized; the complement of their span is the
/// null space of `M`.
pub struct GramEigen {
    pub vecs: DMatrix<f64>,
    pub vals: Vec<f64>,
    pub complete: bool,
}

impl GramEigen {
    pub fn new(z: &DMatrix<f64>) -> Self {
        let n = z.nrows();
        let p = z.ncols();
        let nf = n as f64;
        if p <= n {
            let m = z.transpose() * z / nf;
            let (vals_asc, vecs_asc) = sym_eigen(&m);
            let mut vecs = DMatrix::zeros(p, p);
            let mut vals = Vec::with_capacity(p);
            for i in 0..p {
                let src = p - 1 - i;
                vecs.set_column(i, &vecs_asc.column(src));
                vals.push(vals_asc[src].max(0.0));
            }
            GramEigen { vecs, vals, complete: true }
        } else {
            let g = z * z.transpose() / nf;
            let (vals_asc, u_asc) = sym_eigen(&g);
            let zt = z.transpose();
            let mut vecs = DMatrix::zeros(p, n);
            let mut vals = Vec::with_capacity(n);
            for i in 0..n {
                let src = n - 1 - i;
                let d = vals_asc[src].max(0.0);
                let v = &zt * u_asc.column(src);
                let scale = (nf * d).sqrt();
                if scale > 0.0 {
                    vecs.set_column(i, &(v / scale));
                }
                vals.push(d);
            }
            GramEigen { vecs, vals, complete: false }
        }
    }

    fn lambda_max(&self) -> f64 {
        self.vals.first().copied().unwrap_or(0.0)
    }
}

/// Ridge fit. `λ > 0` solves the regularized normal equations on the cheaper
/// side; `λ = 0` is the exact interpolating limit for `p > n` and the plain
/// least-squares solution for `p ≤ n` (singular systems are reported).
pub fn ridge_fit(sample: &DesignSample, lambda: f64) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!("negative lambda: {lambda}")));
    }
    let n = sample.n();
    let p = sample.p();
    let nf = n as f64;
    if lambda > 0.0 {
        if p <= n {
            let a = sample.z.transpose() * &sample.z / nf
                + DMatrix::identity(p, p) * lambda;
            let b = sample.z.transpose() * &sample.y / nf;
            return crate::linalg::spd_solve(&a, &b);
        }
        // Dual identity: (ZᵀZ/n + λ)⁻¹ Zᵀ y/n = Zᵀ (ZZᵀ/n + λ)⁻¹ y/n.
        let g = &sample.z * sample.z.transpose() / nf + DMatrix::identity(n, n) * lambda;
        let alpha = crate::linalg::spd_solve(&g, &sample.y)?;
        return Ok(sample.z.transpose() * alpha / nf);
    }
    // Ridgeless limit. Well-conditioned overparametrized systems solve on
    // the Gram side by Cholesky; anything near-singular falls back to the
    // spectral pseudoinverse with the relative cutoff.
    if p > n {
        let g = &sample.z * sample.z.transpose() / nf;
        if let Some(chol) = g.clone().cholesky() {
            let alpha = chol.solve(&sample.y);
            let beta = sample.z.transpose() * &alpha / nf;
            if (&sample.z * &beta - &sample.y).norm() <= 1e-8 * sample.y.norm().max(1e-300) {
                return Ok(beta);
            }
        }
    }
    let eig = GramEigen::new(&sample.z);
    let cutoff = RIDGELESS_CUTOFF * eig.lambda_max();
    if p <= n {
        if eig.vals.last().copied().unwrap_or(0.0) <= cutoff {
            return Err(Error::Singular(format!(
                "λ = 0 with p ≤ n and rank-deficient Z: smallest Gram eigenvalue {:.3e}",
                eig.vals.last().copied().unwrap_or(0.0)
            )));
        }
    }
    let b = sample.z.transpose() * &sample.y / nf;
    let mut beta = DVector::zeros(p);
    for (i, &d) in eig.vals.iter().enumerate() {
        if d > cutoff {
            let v = eig.vecs.column(i);
            beta += v * (v.dot(&b) / d);
        }
    }
    Ok(beta)
}

/// Exact empirical bias and variance conditional on `Z`.
///
/// Returns `(B, V)` with `B = λ²⟨β*, S_λ Σ S_λ β*⟩` and
/// `V = (τ²/n) Tr(S_λ² (ZᵀZ/n) Σ)`; at `λ = 0` the pseudoinverse limits.
pub fn empirical_bias_variance(
    sample: &DesignSample,
    model: &SpectralModel,
    lambda: f64,
    tau: f64,
) -> Result<(f64, f64)> {
    if model.p() != sample.p() {
        return Err(Error::dim(format!(
            "spectrum length {} vs design width {}",
            model.p(),
            sample.p()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::invalid(format!("negative lambda: {lambda}")));
    }
    let n = sample.n() as f64;
    let p = sample.p();
    let sigma = model.sigma();
    let isotropic = sigma.iter().all(|&s| s == sigma[0]);

    // Fast isotropic paths that avoid materializing p-space eigenvectors.
    if isotropic && p > sample.n() {
        let c = sigma[0];
        let g = &sample.z * sample.z.transpose() / n;
        if lambda == 0.0 {
            if let Some(chol) = g.clone().cholesky() {
                // B = c(‖β‖² − βᵀPβ) with βᵀPβ = (Zβ)ᵀG⁻¹(Zβ)/n;
                // V = (τ²c/n) Tr(G⁻¹).
                let beta = DVector::from_column_slice(model.beta());
                let zb = &sample.z * &beta;
                let proj = zb.dot(&chol.solve(&zb)) / n;
                let b_emp = c * (beta.norm_squared() - proj).max(0.0);
                let inv = chol.inverse();
                let v_emp = tau * tau * c / n * inv.trace();
                return Ok((b_emp, v_emp));
            }
        } else if model.beta_norm_sq() == 0.0 {
            // Only the variance trace is needed: eigenvalues of G suffice.
            let vals = crate::linalg::sym_eigenvalues(&g);
            let tr: f64 = vals
                .iter()
                .map(|&d| {
                    let d = d.max(0.0);
                    d / ((d + lambda) * (d + lambda))
                })
                .sum();
            return Ok((0.0, tau * tau * c / n * tr));
        }
    }

    let beta = DVector::from_column_slice(model.beta());
    let eig = GramEigen::new(&sample.z);

    // v_iᵀ Σ v_i per eigenvector and ⟨v_i, β*⟩.
    let r = eig.vals.len();
    let mut vsv = vec![0.0; r];
    let mut vb = vec![0.0; r];
    for i in 0..r {
        let v = eig.vecs.column(i);
        let mut acc = 0.0;
        for k in 0..p {
            acc += sigma[k] * v[k] * v[k];
        }
        vsv[i] = acc;
        vb[i] = v.dot(&beta);
    }

    if lambda > 0.0 {
        // S_λ β* = Σ_i [(d_i+λ)⁻¹ − λ⁻¹] ⟨v_i,β⟩ v_i + λ⁻¹ β*.
        let mut u = &beta / lambda;
        for i in 0..r {
            let c = 1.0 / (eig.vals[i] + lambda) - 1.0 / lambda;
            u += eig.vecs.column(i) * (c * vb[i]);
        }
        let mut b_emp = 0.0;
        for k in 0..p {
            b_emp += sigma[k] * u[k] * u[k];
        }
        b_emp *= lambda * lambda;
        let mut tr = 0.0;
        for i in 0..r {
            let d = eig.vals[i];
            tr += d / ((d + lambda) * (d + lambda)) * vsv[i];
        }
        let v_emp = tau * tau / n * tr;
        return Ok((b_emp, v_emp));
    }

    // λ = 0+: bias is the Σ-norm of the null-space component of β*,
    // variance uses the pseudoinverse.
    let cutoff = RIDGELESS_CUTOFF * eig.lambda_max();
    let mut u = beta.clone();
    let mut tr = 0.0;
    for i in 0..r {
        if eig.vals[i] > cutoff {
            u -= eig.vecs.column(i) * vb[i];
            tr += vsv[i] / eig.vals[i];
        }
    }
    let mut b_emp = 0.0;
    for k in 0..p {
        b_emp += sigma[k] * u[k] * u[k];
    }
    let v_emp = tau * tau / n * tr;
    Ok((b_emp, v_emp))
}

/// `‖β̂ − β*‖²_Σ`, the excess prediction risk of a linear estimate.
pub fn excess_risk(beta_hat: &DVector<f64>, beta_star: &[f64], model: &SpectralModel) -> Result<f64> {
    if beta_hat.len() != beta_star.len() || beta_hat.len() != model.p() {
        return Err(Error::dim(format!(
            "excess_risk: got {}, {}, spectrum {}",
            beta_hat.len(),
            beta_star.len(),
            model.p()
        )));
    }
    let sigma = model.sigma();
    let mut acc = 0.0;
    for k in 0..beta_star.len() {
        let d = beta_hat[k] - beta_star[k];
        acc += sigma[k] * d * d;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_model(p: usize, beta: Vec<f64>) -> SpectralModel {
        SpectralModel::new(vec![1.0; p], beta).unwrap()
    }

    #[test]
    fn tau_zero_noise_free() {
        let m = unit_model(1, vec![0.7]);
        let s = sample_design(&m, 3, 0.0, DesignKind::Gaussian, 7).unwrap();
        for i in 0..3 {
            assert_relative_eq!(s.y[i], 0.7 * s.z[(i, 0)], epsilon = 1e-15);
        }
    }

    #[test]
    fn sample_covariance_close_to_identity() {
        let m = unit_model(2, vec![0.0, 0.0]);
        let n = 10_000;
        let s = sample_design(&m, n, 1.0, DesignKind::Gaussian, 11).unwrap();
        let cov = s.z.transpose() * &s.z / n as f64;
        let tol = 5.0 / (n as f64).sqrt();
        assert!((cov[(0, 0)] - 1.0).abs() < tol);
        assert!((cov[(1, 1)] - 1.0).abs() < tol);
        assert!(cov[(0, 1)].abs() < tol);
    }

    #[test]
    fn rademacher_variances_match_spectrum() {
        let m = SpectralModel::new(vec![4.0, 1.0], vec![0.0, 0.0]).unwrap();
        let n = 20_000;
        let s = sample_design(&m, n, 0.0, DesignKind::Rademacher, 3).unwrap();
        for j in 0..2 {
            let var: f64 = (0..n).map(|i| s.z[(i, j)] * s.z[(i, j)]).sum::<f64>() / n as f64;
            // Coordinates are exactly ±σ^1/2, so the empirical variance is exact.
            assert_relative_eq!(var, m.sigma()[j], epsilon = 1e-12);
            for i in 0..n {
                assert_relative_eq!(s.z[(i, j)].abs(), m.sigma()[j].sqrt(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let m = SpectralModel::new(vec![2.0, 1.0, 0.5], vec![1.0, 0.0, -1.0]).unwrap();
        let a = sample_design(&m, 17, 0.3, DesignKind::Gaussian, 99).unwrap();
        let b = sample_design(&m, 17, 0.3, DesignKind::Gaussian, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_solve_one_point() {
        let s = DesignSample::from_parts(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_vec(vec![4.0]),
            0.0,
        );
        let beta = ridge_fit(&s, 0.0).unwrap();
        assert_relative_eq!(beta[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn min_norm_interpolator() {
        let s = DesignSample::from_parts(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
            0.0,
        );
        let beta = ridge_fit(&s, 0.0).unwrap();
        assert_relative_eq!(beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(beta[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let m = unit_model(3, vec![1.0, -1.0, 0.5]);
        let s = sample_design(&m, 10, 0.1, DesignKind::Gaussian, 5).unwrap();
        let beta = ridge_fit(&s, 1e12).unwrap();
        assert!(beta.norm() < 1e-9);
    }

    #[test]
    fn min_norm_matches_pseudoinverse_oracle_and_interpolates() {
        let m = unit_model(8, vec![0.5, 0.0, -0.3, 0.2, 0.0, 0.1, 0.0, -0.2]);
        let s = sample_design(&m, 5, 0.2, DesignKind::Gaussian, 21).unwrap();
        let beta = ridge_fit(&s, 0.0).unwrap();
        // Interpolation: rank(Z) = n generically.
        let resid = (&s.z * &beta - &s.y).norm();
        assert!(resid < 1e-8 * s.y.norm());
        // Oracle: SVD pseudoinverse (independent route).
        let svd = s.z.clone().svd(true, true);
        let oracle = svd.solve(&s.y, 1e-12).unwrap();
        assert_relative_eq!(beta, oracle, epsilon = 1e-8);
        // Minimal norm among interpolators: adding any null-space vector grows the norm.
        assert!(beta.norm() <= oracle.norm() + 1e-10);
    }

    #[test]
    fn rank_deficient_underparametrized_is_reported() {
        // Two identical columns, p = 2 ≤ n = 3.
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let s = DesignSample::from_parts(z, DVector::from_vec(vec![1.0, 2.0, -1.0]), 0.0);
        assert!(ridge_fit(&s, 0.0).is_err());
    }

    #[test]
    fn ridge_continuous_in_lambda() {
        let m = unit_model(4, vec![1.0, 0.2, -0.5, 0.3]);
        let s = sample_design(&m, 6, 0.5, DesignKind::Gaussian, 13).unwrap();
        let b1 = ridge_fit(&s, 0.5).unwrap();
        let b2 = ridge_fit(&s, 0.5 + 1e-9).unwrap();
        assert!((b1 - b2).norm() < 1e-7);
    }

    #[test]
    fn empirical_trivial_cases() {
        let m = SpectralModel::new(vec![1.0, 0.5], vec![0.3, -0.2]).unwrap();
        let s = sample_design(&m, 6, 0.4, DesignKind::Gaussian, 2).unwrap();
        let (_, v) = empirical_bias_variance(&s, &m, 0.7, 0.0).unwrap();
        assert_eq!(v, 0.0);
        let m0 = m.clone().with_beta(vec![0.0, 0.0]).unwrap();
        let (b, _) = empirical_bias_variance(&s, &m0, 0.7, 0.4).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn empirical_matches_dense_oracle() {
        // Direct dense evaluation of the displayed formulas, both p ≤ n and p > n.
        for (n, p, seed) in [(6usize, 3usize, 4u64), (3, 7, 9)] {
            let sigma: Vec<f64> = (0..p).map(|k| 1.0 / (k as f64 + 1.0)).collect();
            let beta: Vec<f64> = (0..p).map(|k| ((k % 3) as f64 - 1.0) * 0.4).collect();
            let m = SpectralModel::new(sigma.clone(), beta.clone()).unwrap();
            let s = sample_design(&m, n, 0.3, DesignKind::Gaussian, seed).unwrap();
            let lambda = 0.2;
            let (b_fast, v_fast) = empirical_bias_variance(&s, &m, lambda, 0.3).unwrap();

            let nf = n as f64;
            let mm = s.z.transpose() * &s.z / nf;
            let sl = (mm.clone() + DMatrix::identity(p, p) * lambda)
                .try_inverse()
                .unwrap();
            let sig = DMatrix::from_diagonal(&DVector::from_vec(sigma.clone()));
            let bvec = DVector::from_vec(beta.clone());
            let u = &sl * &bvec;
            let b_oracle = lambda * lambda * (u.transpose() * &sig * &u)[(0, 0)];
            let v_oracle = 0.3 * 0.3 / nf * (&sl * &sl * &mm * &sig).trace();
            assert_relative_eq!(b_fast, b_oracle, epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(v_fast, v_oracle, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn noise_average_decomposition() {
        // Averaging the excess risk over fresh noise draws converges to B + V.
        let p = 3;
        let n = 5;
        let sigma = vec![1.0, 0.6, 0.2];
        let beta = vec![0.8, -0.5, 0.3];
        let m = SpectralModel::new(sigma, beta.clone()).unwrap();
        let s = sample_design(&m, n, 0.5, DesignKind::Gaussian, 31).unwrap();
        let lambda = 0.3;
        let tau = 0.5;
        let (b_emp, v_emp) = empirical_bias_variance(&s, &m, lambda, tau).unwrap();

        let nf = n as f64;
        let mm = s.z.transpose() * &s.z / nf;
        let sl = (mm + DMatrix::identity(p, p) * lambda).try_inverse().unwrap();
        let a = &sl * (s.z.transpose() * (&s.z * DVector::from_vec(beta.clone()))) / nf;
        let szt = &sl * s.z.transpose() / nf;
        let mut rng = replica_rng(77, 0);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let w = DVector::from_fn(n, |_, _| tau * rng.sample::<f64, _>(StandardNormal));
            let beta_hat = &a + &szt * w;
            acc += excess_risk(&beta_hat, &beta, &m).unwrap();
        }
        let mc = acc / draws as f64;
        let theory = b_emp + v_emp;
        assert!(
            (mc / theory - 1.0).abs() < 0.02,
            "decomposition identity: MC {mc} vs B+V {theory}"
        );
    }

    #[test]
    fn excess_risk_examples() {
        let m = unit_model(2, vec![0.0, 0.0]);
        let bh = DVector::from_vec(vec![3.0, 4.0]);
        assert_relative_eq!(excess_risk(&bh, &[0.0, 0.0], &m).unwrap(), 25.0);
        let m2 = SpectralModel::new(vec![2.0, 1.0], vec![0.0, 0.0]).unwrap();
        let bh2 = DVector::from_vec(vec![1.0, 1.0]);
        assert_relative_eq!(excess_risk(&bh2, &[0.0, 0.0], &m2).unwrap(), 3.0);
        assert!(excess_risk(&bh2, &[0.0], &m2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn primal_dual_agree(seed in 0u64..1000, lambda in 1e-3f64..10.0) {
            let m = unit_model(7, vec![0.5, -0.2, 0.0, 0.3, 0.1, -0.4, 0.2]);
            let s = sample_design(&m, 4, 0.2, DesignKind::Gaussian, seed).unwrap();
            // Primal route, dense.
            let nf = 4.0;
            let a = s.z.transpose() * &s.z / nf + DMatrix::identity(7, 7) * lambda;
            let b = s.z.transpose() * &s.y / nf;
            let primal = a.try_inverse().unwrap() * b;
            let dual = ridge_fit(&s, lambda).unwrap();
            prop_assert!((primal - dual).norm() < 1e-8);
        }
    }
}
