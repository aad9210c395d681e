//! Latent space model: ridge regression on features `z = Wx + u` when the
//! response is linear in the latent covariate `x`.
//!
//! Model: `y = ⟨θ*, x⟩ + ξ`, `z = Wx + u` with `x ~ N(0, I_d)`,
//! `u ~ N(0, I_p)`, and `WᵀW = (pμ/d) I_d`. Writing `κ = pμ/d = μψ⁻¹`, the
//! joint Gaussian structure reduces the problem exactly to a Gaussian design
//! with two-block covariance
//!
//! ```text
//! Σ_z = diag(1+κ, …, 1+κ, 1, …, 1)   (d strong directions among p)
//! ```
//!
//! effective coefficient `β_eff = Wθ*/(1+κ)`, and effective noise
//! `σ² = τ² + r_θ²/(1+κ)`; the gap `r_θ²/(1+κ)` between the best linear
//! predictor in `z` and the truth is an irreducible approximation floor.
//!
//! In the proportional limit `p/n → γ`, `d/p → ψ` and at `λ = 0+`, the
//! predicted excess risk over that oracle has the closed form
//!
//! ```text
//! 𝓑_lat = {1 + γc₀ 𝓔₁/𝓔₂} · μψ⁻¹ r_θ² / ((1+μψ⁻¹)(1+c₀γ(1+μψ⁻¹))²)
//! 𝓥_lat = σ² γc₀ 𝓔₁/𝓔₂
//! ```
//!
//! with `c₀ ≥ 0` solving `1 − 1/γ = (1−ψ)/(1+c₀γ) + ψ/(1+c₀(1+μψ⁻¹)γ)`
//! (overparametrized branch; `1/(c₀γ)` is exactly the effective
//! regularization `λ*` of the two-block spectrum). For `γ < 1` the ridgeless
//! risk is the plain least-squares limit `𝓑 = 0`, `𝓥 = σ²γ/(1−γ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::design::{ridge_fit, DesignSample};
use crate::det_equiv::{predict_risk, RiskPrediction};
use crate::error::{Error, Result};
use crate::mc::{run_replicas, MeanSem};
use crate::spectrum::SpectralModel;

/// Guard band around the interpolation threshold where `c₀` diverges.
pub const GAMMA_GUARD: f64 = 0.05;

/// Proportional-limit parameters of the latent model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatentParams {
    /// `d/p ∈ (0,1)`.
    pub psi: f64,
    /// `p/n ∈ (0,∞)`, overparametrization ratio.
    pub gamma: f64,
    /// Signal strength `μ ≥ 0`.
    pub mu: f64,
    /// `‖θ*‖` limit.
    pub r_theta: f64,
    /// Noise level.
    pub tau: f64,
}

impl LatentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi > 0.0 && self.psi < 1.0) {
            return Err(Error::invalid(format!("psi must lie in (0,1), got {}", self.psi)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if (self.gamma - 1.0).abs() < GAMMA_GUARD {
            return Err(Error::invalid(format!(
                "gamma = {} is inside the guard band |γ−1| < {GAMMA_GUARD} where c₀ diverges",
                self.gamma
            )));
        }
        if self.mu < 0.0 || self.r_theta < 0.0 || self.tau < 0.0 {
            return Err(Error::invalid("mu, r_theta, tau must be nonnegative"));
        }
        Ok(())
    }

    /// `κ = μψ⁻¹`.
    pub fn kappa(&self) -> f64 {
        self.mu / self.psi
    }

    /// Effective noise `σ² = τ² + r_θ²/(1+κ)`.
    pub fn sigma_sq(&self) -> f64 {
        self.tau * self.tau + self.r_theta * self.r_theta / (1.0 + self.kappa())
    }

    /// Approximation floor `r_θ²/(1+κ)`: the L² gap between the best linear
    /// predictor in `z` and the true regression function.
    pub fn approx_floor(&self) -> f64 {
        self.r_theta * self.r_theta / (1.0 + self.kappa())
    }
}

/// Solves the ridgeless `c₀` equation by bisection (overparametrized branch,
/// `γ > 1`). Residual below `1e-12` relative.
pub fn solve_c0(params: &LatentParams) -> Result<f64> {
    params.validate()?;
    let gamma = params.gamma;
    if gamma <= 1.0 {
        return Err(Error::invalid(format!(
            "ridgeless c₀ branch needs γ > 1 (LHS 1 − 1/γ > 0), got γ = {gamma}"
        )));
    }
    let psi = params.psi;
    let a = 1.0 + params.kappa();
    let lhs = 1.0 - 1.0 / gamma;
    let rhs = |c: f64| (1.0 - psi) / (1.0 + c * gamma) + psi / (1.0 + c * a * gamma);
    // rhs decreases from 1 at c = 0; grow the bracket until it goes below lhs.
    let mut hi = 1.0;
    while rhs(hi) > lhs {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence("c₀ bracket expansion failed".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rhs(mid) > lhs {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 * hi.max(1.0) {
            break;
        }
    }
    let c0 = 0.5 * (lo + hi);
    let residual = (rhs(c0) - lhs).abs() / lhs;
    if residual > 1e-12 {
        return Err(Error::NoConvergence(format!("c₀ residual {residual:.3e} > 1e-12")));
    }
    Ok(c0)
}

/// Closed-form ridgeless risk prediction (excess over the oracle linear
/// predictor; the approximation floor is reported separately).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatentRisk {
    pub bias: f64,
    pub variance: f64,
    /// `bias + variance`.
    pub total: f64,
    pub approx_floor: f64,
}

/// Evaluates `𝓑_lat`, `𝓥_lat` at `λ = 0+`.
pub fn latent_risk(params: &LatentParams) -> Result<LatentRisk> {
    params.validate()?;
    let sigma_sq = params.sigma_sq();
    let kappa = params.kappa();
    let r2 = params.r_theta * params.r_theta;
    if params.gamma < 1.0 {
        // Underparametrized ridgeless limit: unbiased least squares.
        let variance = sigma_sq * params.gamma / (1.0 - params.gamma);
        return Ok(LatentRisk {
            bias: 0.0,
            variance,
            total: variance,
            approx_floor: params.approx_floor(),
        });
    }
    let gamma = params.gamma;
    let psi = params.psi;
    let a = 1.0 + kappa;
    let c0 = solve_c0(params)?;
    let e1 = (1.0 - psi) / (1.0 + c0 * gamma).powi(2) + psi * a * a / (1.0 + c0 * a * gamma).powi(2);
    let e2 = (1.0 - psi) / (1.0 + c0 * gamma).powi(2) + psi * a / (1.0 + c0 * a * gamma).powi(2);
    let bias = (1.0 + gamma * c0 * e1 / e2) * kappa * r2 / (a * (1.0 + c0 * gamma * a).powi(2));
    let variance = sigma_sq * gamma * c0 * e1 / e2;
    Ok(LatentRisk { bias, variance, total: bias + variance, approx_floor: params.approx_floor() })
}

/// The exact two-block reduction of a finite latent instance: spectrum
/// `(1+κ)` with multiplicity `d` and `1` with multiplicity `p−d`, effective
/// coefficient mass `κr_θ²/(1+κ)²` in the strong block, effective noise `σ`.
pub fn latent_two_block_model(d: usize, p: usize, mu: f64, r_theta: f64) -> Result<SpectralModel> {
    if p < d {
        return Err(Error::invalid(format!("need p ≥ d to embed the latent space, got p={p}, d={d}")));
    }
    let kappa = p as f64 * mu / d as f64;
    let mut sigma = vec![1.0 + kappa; d];
    sigma.extend(std::iter::repeat(1.0).take(p - d));
    let bcoef = (kappa * r_theta * r_theta).sqrt() / (1.0 + kappa) / (d as f64).sqrt();
    let mut beta = vec![bcoef; d];
    beta.extend(std::iter::repeat(0.0).take(p - d));
    SpectralModel::new(sigma, beta)
}

/// Risk prediction at arbitrary `λ ≥ 0` by feeding the exact two-block
/// reduction into the deterministic equivalents. At `λ = 0` and `γ > 1` this
/// reproduces the closed form above.
pub fn latent_theory(d: usize, p: usize, n: usize, mu: f64, r_theta: f64, tau: f64, lambda: f64) -> Result<RiskPrediction> {
    let model = latent_two_block_model(d, p, mu, r_theta)?;
    let kappa = p as f64 * mu / d as f64;
    let tau_eff = (tau * tau + r_theta * r_theta / (1.0 + kappa)).sqrt();
    predict_risk(&model, n, lambda, tau_eff)
}

/// Monte Carlo estimate of the latent-model risk.
#[derive(Debug, Clone, Serialize)]
pub struct LatentMc {
    /// Excess over the oracle linear predictor `⟨β_eff, z⟩` — the quantity
    /// the closed forms predict.
    pub excess_over_oracle: MeanSem,
    /// Full excess over the truth `⟨θ*, x⟩`: over-oracle plus the floor.
    pub excess_full: MeanSem,
    pub approx_floor: f64,
}

/// Simulates ridge regression of `y` on `z` and evaluates the exact excess
/// risk of each replica's fit (the population expectation over `(x, u, ξ)`
/// is available in closed form given `W`). Seed-deterministic.
pub fn simulate_latent(
    d: usize,
    p: usize,
    n: usize,
    mu: f64,
    r_theta: f64,
    tau: f64,
    lambda: f64,
    seed: u64,
    reps: usize,
) -> Result<LatentMc> {
    if p < d {
        return Err(Error::invalid(format!("cannot build partial isometry with p={p} < d={d}")));
    }
    let kappa = p as f64 * mu / d as f64;
    let floor = r_theta * r_theta / (1.0 + kappa);
    let per_rep: Vec<Result<f64>> = run_replicas(seed, reps, |_, mut rng| {
        // W = (pμ/d)^{1/2} Q with Q the thin Q-factor of a Gaussian p×d matrix.
        let a = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = a.qr().q();
        let w_mat = &q * kappa.sqrt();
        // θ* = r_θ e₁ (any fixed direction; W is rotation-invariant in law).
        let mut theta = DVector::zeros(d);
        theta[0] = r_theta;
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = &x * w_mat.transpose() + u;
        let noise = DVector::from_fn(n, |_, _| tau * rng.sample::<f64, _>(StandardNormal));
        let y = &x * &theta + noise;
        let sample = DesignSample::from_parts(z, y, tau);
        let theta_hat = ridge_fit(&sample, lambda)?;
        // ‖θ̂ − β_eff‖²_{Σ_z} with Σ_z = κQQᵀ + I.
        let beta_eff = &w_mat * &theta / (1.0 + kappa);
        let v = theta_hat - beta_eff;
        let qv = q.transpose() * &v;
        Ok(v.norm_squared() + kappa * qv.norm_squared())
    });
    let mut vals = Vec::with_capacity(reps);
    for r in per_rep {
        vals.push(r?);
    }
    let over = MeanSem::from_samples(&vals);
    let full_vals: Vec<f64> = vals.iter().map(|v| v + floor).collect();
    Ok(LatentMc {
        excess_over_oracle: over,
        excess_full: MeanSem::from_samples(&full_vals),
        approx_floor: floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn c0_collapses_at_mu_zero() {
        // μ = 0, γ = 2: 1/2 = 1/(1+2c₀) gives c₀ = 1/2.
        let params = LatentParams { psi: 0.3, gamma: 2.0, mu: 0.0, r_theta: 1.0, tau: 0.0 };
        assert_relative_eq!(solve_c0(&params).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn c0_gamma_grows_monotonically() {
        // c₀γ = 1/λ*: strictly decreasing in γ, so c₀γ... the product grows
        // towards the γ→1⁺ threshold and shrinks at large γ.
        let mut prev = f64::INFINITY;
        for &gamma in &[1.25, 1.5, 2.0, 4.0, 8.0, 32.0] {
            let params = LatentParams { psi: 0.5, gamma, mu: 1.0, r_theta: 1.0, tau: 0.0 };
            let c0g = solve_c0(&params).unwrap() * gamma;
            assert!(c0g < prev, "c₀γ should decrease in γ");
            prev = c0g;
        }
    }

    #[test]
    fn out_of_branch_and_guard_band() {
        let p = LatentParams { psi: 0.5, gamma: 0.5, mu: 1.0, r_theta: 1.0, tau: 0.0 };
        assert!(solve_c0(&p).is_err());
        let p = LatentParams { psi: 0.5, gamma: 1.01, mu: 1.0, r_theta: 1.0, tau: 0.0 };
        assert!(latent_risk(&p).is_err());
    }

    #[test]
    fn no_signal_no_noise_is_zero() {
        let p = LatentParams { psi: 0.4, gamma: 2.0, mu: 1.0, r_theta: 0.0, tau: 0.0 };
        let r = latent_risk(&p).unwrap();
        assert_eq!(r.bias, 0.0);
        assert_eq!(r.variance, 0.0);
    }

    #[test]
    fn closed_form_equals_two_block_reduction() {
        // 𝓑_lat, 𝓥_lat coincide with the deterministic equivalents of the
        // exact two-block spectrum at λ = 0 (λ* = 1/(c₀γ)).
        let (d, n) = (20usize, 400usize);
        for &gamma in &[1.25f64, 2.0, 4.0, 8.0] {
            let p = (gamma * n as f64).round() as usize;
            let params = LatentParams {
                psi: d as f64 / p as f64,
                gamma: p as f64 / n as f64,
                mu: 1.0,
                r_theta: 1.0,
                tau: 0.0,
            };
            let closed = latent_risk(&params).unwrap();
            let pred = latent_theory(d, p, n, 1.0, 1.0, 0.0, 0.0).unwrap();
            assert_relative_eq!(closed.bias, pred.bias, max_relative = 1e-9);
            assert_relative_eq!(closed.variance, pred.variance, max_relative = 1e-9);
        }
    }

    #[test]
    fn mu_to_infinity_limits() {
        // σ² → τ² and the signal prefactor κ/(1+κ) → 1.
        let p = LatentParams { psi: 0.5, gamma: 2.0, mu: 1e12, r_theta: 1.0, tau: 0.3 };
        assert_relative_eq!(p.sigma_sq(), 0.09, max_relative = 1e-10);
        let kappa = p.kappa();
        assert_relative_eq!(kappa / (1.0 + kappa), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn pure_noise_features_learn_nothing() {
        // τ = 0, μ = 0 at huge λ: the predictor shrinks to 0 and the full
        // excess is the floor r_θ² (nothing learnable).
        let mc = simulate_latent(10, 50, 100, 0.0, 1.0, 0.0, 1e9, 5, 4).unwrap();
        assert!(mc.excess_over_oracle.mean < 1e-10);
        assert!((mc.excess_full.mean - 1.0).abs() < 1e-9);
        // And with μ = 0 at any λ the full excess still floors at r_θ².
        let mc = simulate_latent(10, 50, 100, 0.0, 1.0, 0.0, 0.1, 6, 4).unwrap();
        assert!(mc.excess_full.mean >= 1.0);
    }

    #[test]
    fn huge_lambda_null_predictor() {
        let mc = simulate_latent(10, 80, 60, 1.0, 1.0, 0.2, 1e10, 7, 3).unwrap();
        // Over-oracle excess of the null predictor is ‖β_eff‖²_Σ = κr²/(1+κ).
        let kappa = 8.0;
        assert_relative_eq!(
            mc.excess_over_oracle.mean,
            kappa / (1.0 + kappa),
            max_relative = 1e-6
        );
        assert!(mc.excess_full.mean > mc.excess_over_oracle.mean);
    }

    #[test]
    fn p_smaller_than_d_rejected() {
        assert!(simulate_latent(10, 5, 20, 1.0, 1.0, 0.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn double_descent_shape_and_smoothing() {
        // Ridgeless theory spikes near γ = 1 and re-descends; positive λ
        // strictly lowers the spike.
        let (d, n) = (20usize, 400usize);
        let grid = [0.5f64, 0.8, 0.9, 1.1, 1.25, 2.0, 4.0, 8.0];
        let totals: Vec<f64> = grid
            .iter()
            .map(|&g| {
                let p = (g * n as f64).round() as usize;
                let params = LatentParams {
                    psi: d as f64 / p as f64,
                    gamma: p as f64 / n as f64,
                    mu: 1.0,
                    r_theta: 1.0,
                    tau: 0.0,
                };
                latent_risk(&params).unwrap().total
            })
            .collect();
        let t = |g: f64| totals[grid.iter().position(|&x| x == g).unwrap()];
        assert!(t(0.5) < t(0.9), "spike approaching threshold from below");
        assert!(t(8.0) < t(1.25), "re-descent after threshold");
        // Smoothing: max over grid at λ = 0.5 strictly below ridgeless max.
        let max0 = totals.iter().cloned().fold(0.0_f64, f64::max);
        let max_reg = grid
            .iter()
            .map(|&g| {
                let p = (g * n as f64).round() as usize;
                let pred = latent_theory(d, p, n, 1.0, 1.0, 0.0, 0.5).unwrap();
                pred.bias + pred.variance
            })
            .fold(0.0_f64, f64::max);
        assert!(max_reg < max0, "regularization should smooth the spike: {max_reg} vs {max0}");
    }
}
