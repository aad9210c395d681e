//! Deterministic equivalents for ridge regression risk.
//!
//! Given a spectrum `σ_1 ≥ σ_2 ≥ …` and sample size `n`, the effective
//! regularization `λ* = λ*(λ)` is the unique positive solution of
//!
//! ```text
//! n (1 − λ/λ*) = Tr(Σ (Σ + λ* I)⁻¹) ,
//! ```
//!
//! with `λ* = 0` by definition when `λ = 0` and `p ≤ n`. The predicted bias
//! and variance are
//!
//! ```text
//! 𝓑 = λ*² ⟨β*, (Σ+λ*I)⁻² Σ β*⟩ / (1 − T/n) ,    𝓥 = τ² T / (n − T) ,
//! ```
//!
//! with the shared trace `T = Tr(Σ²(Σ+λ*I)⁻²)`, and the sequence-model noise
//! `ω²` satisfies `𝓑 + 𝓥 = λ*²⟨β*,(Σ+λ*I)⁻²Σβ*⟩ + (ω²/n) T` identically.
//! Predictions are flagged invalid when `T ≥ n`.
//!
//! The module also exposes the tail functionals behind benign overfitting:
//! effective ranks `r_q(k) = Σ_{ℓ>k} (σ_ℓ/σ_{k+1})^q`, `r̄ = r₁²/r₂`, the
//! signal cut `k* = max{k : σ_k ≥ λ*}`, and the crude variance/bias bounds of
//! the benign-overfitting proposition.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectrum::{SpectralModel, TailRule};

/// Result of the fixed-point solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveRegularization {
    pub lambda_star: f64,
    /// `|n(1 − λ/λ*) − Tr(Σ(Σ+λ*I)⁻¹)| / n`.
    pub residual: f64,
    pub iterations: usize,
}

/// Relative residual target for the fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-12;

fn trace_resolvent(sigma: &[f64], x: f64) -> f64 {
    sigma.iter().map(|&s| s / (s + x)).sum()
}

fn trace_resolvent_sq(sigma: &[f64], x: f64) -> f64 {
    sigma.iter().map(|&s| (s / (s + x)).powi(2)).sum()
}

/// Solves `n(1 − λ/λ*) = Tr(Σ(Σ+λ*I)⁻¹)` by bisection on the monotone
/// function `g(x) = n(1 − λ/x) − Tr(Σ(Σ+xI)⁻¹)`, then Newton polish.
pub fn solve_effective_reg(
    model: &SpectralModel,
    n: usize,
    lambda: f64,
) -> Result<EffectiveRegularization> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!("negative lambda: {lambda}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be ≥ 1"));
    }
    let sigma = model.sigma();
    let p = sigma.len();
    let nf = n as f64;

    if lambda == 0.0 && p <= n {
        // Underparametrized ridgeless case: λ* = 0 by definition.
        return Ok(EffectiveRegularization { lambda_star: 0.0, residual: 0.0, iterations: 0 });
    }

    let g = |x: f64| nf * (1.0 - lambda / x) - trace_resolvent(sigma, x);
    let mut lo = lambda.max(1e-30);
    let mut hi = lambda + sigma[0] * p as f64 / nf + 1.0;
    debug_assert!(g(hi) > 0.0);
    let mut iterations = 0usize;
    for _ in 0..200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-15 * hi {
            break;
        }
    }
    // Newton polish: g'(x) = nλ/x² + Σ σ/(σ+x)².
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        iterations += 1;
        let gx = g(x);
        let gp = nf * lambda / (x * x)
            + sigma.iter().map(|&s| s / ((s + x) * (s + x))).sum::<f64>();
        if gp <= 0.0 {
            break;
        }
        let step = gx / gp;
        let next = x - step;
        if next > 0.0 {
            x = next;
        }
        if step.abs() < 1e-16 * x {
            break;
        }
    }
    let residual = g(x).abs() / nf;
    if residual > FIXED_POINT_TOL {
        return Err(Error::NoConvergence(format!(
            "fixed point residual {residual:.3e} > {FIXED_POINT_TOL:.0e}, bracket [{lo:.6e}, {hi:.6e}]"
        )));
    }
    Ok(EffectiveRegularization { lambda_star: x, residual, iterations })
}

/// Full risk prediction record, as emitted by the CLI.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RiskPrediction {
    pub lambda: f64,
    pub lambda_star: f64,
    pub bias: f64,
    pub variance: f64,
    pub omega_sq: f64,
    pub k_star: usize,
    /// `T/n` with `T = Tr(Σ²(Σ+λ*I)⁻²)`; predictions require `T/n < 1`.
    pub denom_trace_frac: f64,
    pub valid: bool,
}

/// `λ*²⟨β*,(Σ+λ*I)⁻²Σβ*⟩`, the sequence-model bias numerator.
fn bias_numerator(model: &SpectralModel, lambda_star: f64) -> f64 {
    model
        .sigma()
        .iter()
        .zip(model.beta())
        .map(|(&s, &b)| {
            let d = s + lambda_star;
            lambda_star * lambda_star * s * b * b / (d * d)
        })
        .sum()
}

/// Computes `λ*`, `𝓑`, `𝓥`, `ω²`, and `k*` in one pass.
pub fn predict_risk(model: &SpectralModel, n: usize, lambda: f64, tau: f64) -> Result<RiskPrediction> {
    let eff = solve_effective_reg(model, n, lambda)?;
    let ls = eff.lambda_star;
    let nf = n as f64;
    let t = trace_resolvent_sq(model.sigma(), ls);
    let frac = t / nf;
    if frac >= 1.0 {
        return Err(Error::InvalidPrediction(format!(
            "denominator trace Tr(Σ²(Σ+λ*I)⁻²) = {t:.6e} ≥ n = {n}"
        )));
    }
    let num = bias_numerator(model, ls);
    let bias = num / (1.0 - frac);
    let variance = tau * tau * t / (nf - t);
    let omega_sq = (tau * tau + num) / (1.0 - frac);
    let k_star = model.sigma().iter().take_while(|&&s| s >= ls).count();
    Ok(RiskPrediction {
        lambda,
        lambda_star: ls,
        bias,
        variance,
        omega_sq,
        k_star,
        denom_trace_frac: frac,
        valid: true,
    })
}

/// Predicted bias `𝓑(Σ, β*)`.
pub fn predicted_bias(model: &SpectralModel, n: usize, lambda: f64) -> Result<f64> {
    Ok(predict_risk(model, n, lambda, 0.0)?.bias)
}

/// Predicted variance `𝓥(Σ)`.
pub fn predicted_variance(model: &SpectralModel, n: usize, lambda: f64, tau: f64) -> Result<f64> {
    Ok(predict_risk(model, n, lambda, tau)?.variance)
}

/// Sequence-model noise `ω²`.
pub fn sequence_model_noise(model: &SpectralModel, n: usize, lambda: f64, tau: f64) -> Result<f64> {
    Ok(predict_risk(model, n, lambda, tau)?.omega_sq)
}

/// Risk of the equivalent sequence model at noise `ω`. Equals `𝓑 + 𝓥` by
/// construction; exposed separately so the identity can be checked.
pub fn sequence_model_risk(model: &SpectralModel, n: usize, lambda: f64, tau: f64) -> Result<f64> {
    let pred = predict_risk(model, n, lambda, tau)?;
    let t = pred.denom_trace_frac * n as f64;
    Ok(bias_numerator(model, pred.lambda_star) + pred.omega_sq / n as f64 * t)
}

/// Tail effective ranks at level `k` (`0 ≤ k < p`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveRanks {
    pub r1: f64,
    pub r2: f64,
    pub r_bar: f64,
    /// Spacing ratio `b_k = σ_k/σ_{k+1}` (1 for `k = 0`).
    pub b_k: f64,
}

fn tail_remainder(tail: TailRule, p: usize, q: f64) -> f64 {
    // Integral estimate of Σ_{ℓ>p} σ_ℓ^q for the parametric tails.
    let pf = p as f64;
    match tail {
        TailRule::PowerLaw { alpha } => {
            let e = q * alpha;
            if e > 1.0 {
                pf.powf(1.0 - e) / (e - 1.0)
            } else {
                f64::INFINITY
            }
        }
        TailRule::LogPower { beta } => {
            let lb = pf.ln();
            if q > 1.0 {
                pf.powf(1.0 - q) * lb.powf(-q * beta) / (q - 1.0)
            } else if q * beta > 1.0 {
                lb.powf(1.0 - q * beta) / (q * beta - 1.0)
            } else {
                f64::INFINITY
            }
        }
    }
}

/// `r_q(k) = Σ_{ℓ>k}(σ_ℓ/σ_{k+1})^q`, `r̄ = r₁²/r₂`, `b_k = σ_k/σ_{k+1}`.
///
/// For parametric spectra, the mass beyond the truncation is estimated by the
/// analytic integral remainder so that infinite-`p` behavior is preserved.
pub fn effective_ranks(model: &SpectralModel, k: usize) -> Result<EffectiveRanks> {
    let sigma = model.sigma();
    let p = sigma.len();
    if k + 1 > p {
        return Err(Error::invalid(format!(
            "effective ranks need σ_(k+1): k = {k} at spectrum length {p} with no tail rule"
        )));
    }
    let pivot = sigma[k]; // σ_{k+1} in 1-based notation
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for &s in &sigma[k + 1..] {
        let r = s / pivot;
        r1 += r;
        r2 += r * r;
    }
    // σ_{k+1} itself contributes ratio 1 to both sums (ℓ = k+1 term).
    r1 += 1.0;
    r2 += 1.0;
    if let Some(tail) = model.tail {
        r1 += tail_remainder(tail, p, 1.0) / pivot;
        r2 += tail_remainder(tail, p, 2.0) / (pivot * pivot);
    }
    let b_k = if k == 0 { 1.0 } else { sigma[k - 1] / sigma[k] };
    Ok(EffectiveRanks { r1, r2, r_bar: r1 * r1 / r2, b_k })
}

/// Benign-overfitting bounds at `λ = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenignBounds {
    pub lambda_star: f64,
    pub k_star: usize,
    pub v_bound: f64,
    pub b_bound: f64,
    /// Sandwich `k*/2 + r₁(k*)/(2 b_{k*}) ≤ n ≤ 2k* + 2 r₁(k*)`.
    pub n_lower: f64,
    pub n_upper: f64,
    pub ranks: EffectiveRanks,
}

/// Evaluates the crude bias/variance bounds, refusing when the underlying
/// trace condition `Tr(Σ²(Σ+λ*I)⁻²) ≤ n(1 − 1/c*)` fails.
pub fn benign_bounds(model: &SpectralModel, n: usize, tau: f64, c_star: f64) -> Result<BenignBounds> {
    if c_star <= 1.0 {
        return Err(Error::invalid(format!("c* must be > 1, got {c_star}")));
    }
    let eff = solve_effective_reg(model, n, 0.0)?;
    let ls = eff.lambda_star;
    let t = trace_resolvent_sq(model.sigma(), ls);
    let nf = n as f64;
    if t > nf * (1.0 - 1.0 / c_star) {
        return Err(Error::ConditionViolated(format!(
            "Tr(Σ²(Σ+λ*I)⁻²) = {t:.6e} exceeds n(1 − 1/c*) = {:.6e}",
            nf * (1.0 - 1.0 / c_star)
        )));
    }
    let sigma = model.sigma();
    let beta = model.beta();
    let k_star = sigma.iter().take_while(|&&s| s >= ls).count();
    if k_star >= sigma.len() {
        return Err(Error::invalid(
            "k* reaches the end of the explicit spectrum; effective ranks undefined",
        ));
    }
    let ranks = effective_ranks(model, k_star)?;
    let v_bound = c_star * tau * tau * (k_star as f64 / nf + ranks.r2 / nf);
    let head: f64 = (0..k_star).map(|i| beta[i] * beta[i] / sigma[i]).sum();
    let tail: f64 = (k_star..sigma.len()).map(|i| sigma[i] * beta[i] * beta[i]).sum();
    let sig_k = if k_star == 0 { ls } else { sigma[k_star - 1] };
    let b_bound = c_star * (sig_k * sig_k * head + tail);
    let b_at = if k_star == 0 { 1.0 } else { sigma[k_star - 1] / sigma[k_star] };
    let n_lower = k_star as f64 / 2.0 + ranks.r1 / (2.0 * b_at);
    let n_upper = 2.0 * k_star as f64 + 2.0 * ranks.r1;
    if n_lower > nf {
        return Err(Error::ConditionViolated(format!(
            "sandwich lower bound {n_lower:.3} exceeds n = {n}"
        )));
    }
    Ok(BenignBounds { lambda_star: ls, k_star, v_bound, b_bound, n_lower, n_upper, ranks })
}

/// Effective dimension and target-alignment diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectrumDiagnostics {
    /// `max_k (Σ_{l≥k} σ_l)/σ_k` over `1 ≤ k ≤ min(n,p)`, floored at `n`.
    pub d_sigma: f64,
    /// `⟨β*, Σ(λ*I+Σ)⁻¹β*⟩ / (‖β*‖² Tr(Σ(λ*I+Σ)⁻¹))`.
    pub rho: f64,
    pub lambda_star: f64,
}

impl SpectrumDiagnostics {
    /// Truth value of the dimension-free-regime inequality
    /// `d_Σ(n) ≤ ρ^{1/6} n^{1+γ}` for a caller-chosen `γ`.
    pub fn dimension_free_holds(&self, n: usize, gamma: f64) -> bool {
        self.d_sigma <= self.rho.powf(1.0 / 6.0) * (n as f64).powf(1.0 + gamma)
    }
}

pub fn spectrum_diagnostics(model: &SpectralModel, n: usize, lambda: f64) -> Result<SpectrumDiagnostics> {
    let sigma = model.sigma();
    let p = sigma.len();
    let mut suffix = 0.0;
    let mut suffix_sums = vec![0.0; p + 1];
    for k in (0..p).rev() {
        suffix += sigma[k];
        suffix_sums[k] = suffix;
    }
    let mut d_sigma: f64 = n as f64;
    for k in 0..p.min(n) {
        d_sigma = d_sigma.max(suffix_sums[k] / sigma[k]);
    }
    let beta = model.beta();
    let bnorm = model.beta_norm_sq();
    if bnorm == 0.0 {
        return Err(Error::Undefined("rho undefined for β* = 0".into()));
    }
    let ls = solve_effective_reg(model, n, lambda)?.lambda_star;
    let num: f64 = sigma
        .iter()
        .zip(beta)
        .map(|(&s, &b)| s / (s + ls) * b * b)
        .sum();
    let den = bnorm * trace_resolvent(sigma, ls);
    Ok(SpectrumDiagnostics { d_sigma, rho: num / den, lambda_star: ls })
}
