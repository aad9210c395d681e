//! Probabilists' Hermite polynomials and Hermite coefficients.
//!
//! Classical normalization: `E[He_j(G) He_k(G)] = k! 1_{j=k}`, so any
//! `g ∈ L²(N(0,1))` decomposes as `g = Σ_k μ_k(g)/k! · He_k` with
//! `μ_k(g) = E[g(G) He_k(G)]` and `‖g‖² = Σ_k μ_k²/k!`.

use super::quad::gaussian_expect_kinked;
use crate::error::Result;

/// `He_k(x)` by the recurrence `He_{k+1} = x·He_k − k·He_{k−1}`.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut pm = 1.0;
    let mut p = x;
    for j in 1..k {
        let next = x * p - j as f64 * pm;
        pm = p;
        p = next;
    }
    p
}

/// Hermite coefficients `μ_0, …, μ_{k_max}` of `f`, by kink-aware Gaussian
/// quadrature with node-doubling convergence checks.
pub fn hermite_coeffs<F: Fn(f64) -> f64>(f: F, kinks: &[f64], k_max: usize) -> Result<Vec<f64>> {
    (0..=k_max)
        .map(|k| gaussian_expect_kinked(|x| f(x) * hermite_he(k, x), kinks, 1e-12))
        .collect()
}

/// `‖f‖²_{L²(N(0,1))}`.
pub fn gaussian_norm_sq<F: Fn(f64) -> f64>(f: F, kinks: &[f64]) -> Result<f64> {
    gaussian_expect_kinked(|x| f(x) * f(x), kinks, 1e-12)
}
