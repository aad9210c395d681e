//! Activation functions, their Hermite caches, and the scalar functionals
//! the risk theory is driven by.
//!
//! For an activation `σ` with weak derivative `σ′` and `G ~ N(0,1)`:
//!
//! ```text
//! μ_k(σ)  = E[σ(G) He_k(G)]                         (Hermite coefficients)
//! b̄₀ = E[σ(G)],  b̄₁ = E[G σ(G)],  b̄*² = E[σ(G)²] − b̄₀² − b̄₁²,  ζ = b̄₁/b̄*
//! v_ℓ(σ)  = Σ_{k≥ℓ} μ_k(σ′)²/k!                     (high-frequency mass of σ′)
//! h_RF(t) = E[σ(G₁) σ(tG₁ + √(1−t²)G₂)]
//! h_NT(t) = t · E[σ′(G₁) σ′(tG₁ + √(1−t²)G₂)]
//! ```
//!
//! The `d = ∞` kernels `h_RF`, `h_NT` use Gaussian pair expectations; the
//! finite-`d` kernels `h^{(d)}` integrate over first-layer weights uniform on
//! the unit sphere with data on the sphere of radius `√d` ([`SphereKernels`]).

use serde::{Deserialize, Serialize};

use super::hermite::{gaussian_norm_sq, hermite_coeffs, hermite_he};
use super::quad::gaussian_pair_expect;
use super::sphere::{panel_inner_rule, SphereQuadrature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    /// `ln(1 + e^x)`: a smooth ReLU.
    Softplus,
    /// `tanh(scale·x)`: bounded, smooth, strictly increasing.
    Tanh { scale: f64 },
    /// `x²/2` (derivative `x`).
    SquareHalf,
    /// `Σ c_k He_k(x)`.
    HermiteCombo(Vec<(usize, f64)>),
}

impl Activation {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Tanh { scale } => (scale * x).tanh(),
            Activation::SquareHalf => 0.5 * x * x,
            Activation::HermiteCombo(terms) => {
                terms.iter().map(|&(k, c)| c * hermite_he(k, x)).sum()
            }
        }
    }

    /// Weak derivative `σ′`.
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh { scale } => {
                let t = (scale * x).tanh();
                scale * (1.0 - t * t)
            }
            Activation::SquareHalf => x,
            Activation::HermiteCombo(terms) => terms
                .iter()
                .map(|&(k, c)| if k == 0 { 0.0 } else { c * k as f64 * hermite_he(k - 1, x) })
                .sum(),
        }
    }

    /// Points where `σ` is not smooth (quadrature split locations).
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Activation::Relu => vec![0.0],
            _ => vec![],
        }
    }

    /// Discontinuities of `σ′`.
    pub fn deriv_kinks(&self) -> Vec<f64> {
        match self {
            Activation::Relu => vec![0.0],
            _ => vec![],
        }
    }

    /// True for activations that are bounded, smooth, and strictly
    /// increasing (the single-neuron landscape conditions).
    pub fn is_bounded_smooth_increasing(&self) -> bool {
        matches!(self, Activation::Tanh { scale } if *scale > 0.0)
    }
}

/// `b̄₀, b̄₁, b̄*², ζ` of an activation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HermiteBars {
    pub b0: f64,
    pub b1: f64,
    pub b_star_sq: f64,
    /// `b̄₁/b̄*`; `None` when `σ` is affine (`b̄* = 0`).
    pub zeta: Option<f64>,
}

/// Activation with cached Hermite data for `σ` and `σ′`.
#[derive(Debug, Clone)]
pub struct ActivationSpec {
    pub activation: Activation,
    pub k_max: usize,
    pub mu_sigma: Vec<f64>,
    pub mu_sigma_prime: Vec<f64>,
    pub norm_sq_sigma: f64,
    pub norm_sq_sigma_prime: f64,
}

pub const DEFAULT_K_MAX: usize = 12;

impl ActivationSpec {
    pub fn new(activation: Activation, k_max: usize) -> Result<Self> {
        let kinks = activation.kinks();
        let dkinks = activation.deriv_kinks();
        let mu_sigma = hermite_coeffs(|x| activation.eval(x), &kinks, k_max)?;
        let mu_sigma_prime = hermite_coeffs(|x| activation.deriv(x), &dkinks, k_max)?;
        let norm_sq_sigma = gaussian_norm_sq(|x| activation.eval(x), &kinks)?;
        let norm_sq_sigma_prime = gaussian_norm_sq(|x| activation.deriv(x), &dkinks)?;
        let spec = ActivationSpec {
            activation,
            k_max,
            mu_sigma,
            mu_sigma_prime,
            norm_sq_sigma,
            norm_sq_sigma_prime,
        };
        // Parseval: the cached partial sum may not exceed the norm.
        if spec.partial_parseval_sigma() > norm_sq_sigma + 1e-9 * norm_sq_sigma.max(1.0) {
            return Err(Error::Numerical(format!(
                "Hermite cache violates Parseval: Σμ²/k! = {} > ‖σ‖² = {}",
                spec.partial_parseval_sigma(),
                norm_sq_sigma
            )));
        }
        Ok(spec)
    }

    pub fn with_default_depth(activation: Activation) -> Result<Self> {
        Self::new(activation, DEFAULT_K_MAX)
    }

    /// `Σ_{k ≤ k_max} μ_k(σ)²/k!`.
    pub fn partial_parseval_sigma(&self) -> f64 {
        let mut fact = 1.0;
        let mut sum = 0.0;
        for (k, m) in self.mu_sigma.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            sum += m * m / fact;
        }
        sum
    }

    /// Truncation gap `‖σ‖² − Σ_{k ≤ k_max} μ_k²/k!` (mass above `k_max`).
    pub fn hermite_tail_sigma(&self) -> f64 {
        (self.norm_sq_sigma - self.partial_parseval_sigma()).max(0.0)
    }

    pub fn hermite_bars(&self) -> HermiteBars {
        let b0 = self.mu_sigma[0];
        let b1 = self.mu_sigma[1];
        let b_star_sq = (self.norm_sq_sigma - b0 * b0 - b1 * b1).max(0.0);
        let zeta = if b_star_sq > 1e-12 { Some(b1 / b_star_sq.sqrt()) } else { None };
        HermiteBars { b0, b1, b_star_sq, zeta }
    }

    /// `v_ℓ(σ) = Σ_{k≥ℓ} μ_k(σ′)²/k!`, computed exactly as the norm of `σ′`
    /// minus the explicit low-degree mass.
    pub fn v_ell(&self, ell: usize) -> f64 {
        let mut fact = 1.0;
        let mut low = 0.0;
        for k in 0..ell.min(self.mu_sigma_prime.len()) {
            if k > 0 {
                fact *= k as f64;
            }
            low += self.mu_sigma_prime[k] * self.mu_sigma_prime[k] / fact;
        }
        (self.norm_sq_sigma_prime - low).max(0.0)
    }

    /// Infinite-width RF kernel profile `h_RF(t)` on `[−1, 1]`.
    pub fn h_rf_limit(&self, t: f64) -> Result<f64> {
        let kinks = self.activation.kinks();
        gaussian_pair_expect(
            |x| self.activation.eval(x),
            |x| self.activation.eval(x),
            t,
            &kinks,
            &kinks,
            1e-11,
        )
    }

    /// Infinite-width NT kernel profile `h_NT(t) = t·E[σ′σ′]` on `[−1, 1]`.
    pub fn h_nt_limit(&self, t: f64) -> Result<f64> {
        let kinks = self.activation.deriv_kinks();
        let e = gaussian_pair_expect(
            |x| self.activation.deriv(x),
            |x| self.activation.deriv(x),
            t,
            &kinks,
            &kinks,
            1e-11,
        )?;
        Ok(t * e)
    }
}

/// Finite-`d` kernel quadrature: weights `w` uniform on the unit sphere
/// `S^{d-1}`, data on the sphere of radius `√d`.
///
/// For `‖x₁‖ = ‖x₂‖ = √d` at inner-product `⟨x₁,x₂⟩/d = t`, the pair
/// `(⟨w,x₁⟩, ⟨w,x₂⟩)` equals `(c, tc + √(1−t²)·√(d−c²)·η)` with `c = √d ξ₁`
/// the scaled first coordinate of `w` and `η` the first coordinate of a
/// uniform point on `S^{d-2}`.
#[derive(Debug, Clone)]
pub struct SphereKernels {
    pub d: usize,
    outer: SphereQuadrature,
    inner: SphereQuadrature,
}

impl SphereKernels {
    /// `u_splits` are kink locations of the integrands in the `⟨w,x⟩`
    /// variable (e.g. 0 for ReLU); they are baked into the outer rule.
    pub fn new(d: usize, u_splits: &[f64]) -> Result<Self> {
        if d < 4 {
            return Err(Error::invalid(format!(
                "finite-d sphere kernels need d ≥ 4 (inner coordinate law), got {d}"
            )));
        }
        let outer = SphereQuadrature::with_splits(d, (d as f64).sqrt(), 10, u_splits)?;
        let inner = SphereQuadrature::new(d - 1, 1.0, 10)?;
        Ok(SphereKernels { d, outer, inner })
    }

    /// `E_w[f(r₁·⟨w,x̂₁⟩√d) · g(r₂·⟨w,x̂₂⟩√d)]` at angle cosine `t` between
    /// `x̂₁, x̂₂`; `v_kinks` are kink locations of `g` (inner splits).
    pub fn pair_expect<F, G>(&self, r1: f64, r2: f64, t: f64, f: F, g: G, v_kinks: &[f64]) -> f64
    where
        F: Fn(f64) -> f64,
        G: Fn(f64) -> f64,
    {
        let d = self.d as f64;
        let s = (1.0 - t * t).max(0.0).sqrt();
        if s < 1e-9 {
            let sign = if t >= 0.0 { 1.0 } else { -1.0 };
            return self.outer.integrate(|c| f(r1 * c) * g(r2 * sign * c));
        }
        self.outer.integrate(|c| {
            let fu = f(r1 * c);
            if fu == 0.0 {
                return 0.0;
            }
            let span = s * (d - c * c).max(0.0).sqrt();
            let inner_val = if v_kinks.is_empty() {
                self.inner.integrate(|eta| g(r2 * (t * c + span * eta)))
            } else {
                let splits: Vec<f64> = v_kinks
                    .iter()
                    .filter_map(|&k| {
                        if span > 0.0 {
                            Some((k / r2 - t * c) / span)
                        } else {
                            None
                        }
                    })
                    .collect();
                panel_inner_rule(self.d - 1, &splits).integrate(|eta| g(r2 * (t * c + span * eta)))
            };
            fu * inner_val
        })
    }

    /// `h_RF^{(d)}(t) = E_w[σ(⟨w,x₁⟩) σ(⟨w,x₂⟩)]`.
    pub fn h_rf_d(&self, act: &Activation, t: f64) -> f64 {
        self.pair_expect(1.0, 1.0, t, |u| act.eval(u), |v| act.eval(v), &act.kinks())
    }

    /// `h_NT^{(d)}(t) = t · E_w[σ′(⟨w,x₁⟩) σ′(⟨w,x₂⟩)]`.
    pub fn h_nt_d(&self, act: &Activation, t: f64) -> f64 {
        t * self.pair_expect(1.0, 1.0, t, |u| act.deriv(u), |v| act.deriv(v), &act.deriv_kinks())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const INV_SQRT_2PI: f64 = 0.3989422804014327;

    #[test]
    fn identity_functionals() {
        let spec = ActivationSpec::with_default_depth(Activation::Identity).unwrap();
        assert_relative_eq!(spec.v_ell(0), 1.0, epsilon = 1e-11);
        assert!(spec.v_ell(1) < 1e-11);
        let bars = spec.hermite_bars();
        assert!(bars.b0.abs() < 1e-12);
        assert_relative_eq!(bars.b1, 1.0, epsilon = 1e-11);
        assert!(bars.b_star_sq < 1e-11);
        assert!(bars.zeta.is_none());
        assert_relative_eq!(spec.h_rf_limit(0.37).unwrap(), 0.37, epsilon = 1e-10);
        assert_relative_eq!(spec.h_nt_limit(0.37).unwrap(), 0.37, epsilon = 1e-10);
    }

    #[test]
    fn relu_functionals() {
        let spec = ActivationSpec::with_default_depth(Activation::Relu).unwrap();
        assert_relative_eq!(spec.mu_sigma[0], INV_SQRT_2PI, epsilon = 1e-10);
        assert_relative_eq!(spec.mu_sigma[1], 0.5, epsilon = 1e-10);
        // σ′ = step: v_0 = E[step²] = 1/2.
        assert_relative_eq!(spec.v_ell(0), 0.5, epsilon = 1e-10);
        let bars = spec.hermite_bars();
        assert_relative_eq!(bars.b0, INV_SQRT_2PI, epsilon = 1e-10);
        assert_relative_eq!(bars.b1, 0.5, epsilon = 1e-10);
        assert_relative_eq!(
            bars.b_star_sq,
            0.25 - 1.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-10
        );
    }

    #[test]
    fn square_half_tail() {
        // σ = x²/2, σ′ = x: v_1 = 1, v_2 = 0.
        let spec = ActivationSpec::with_default_depth(Activation::SquareHalf).unwrap();
        assert_relative_eq!(spec.v_ell(1), 1.0, epsilon = 1e-11);
        assert!(spec.v_ell(2) < 1e-11);
    }

    #[test]
    fn hermite2_bars() {
        let spec =
            ActivationSpec::with_default_depth(Activation::HermiteCombo(vec![(2, 1.0)])).unwrap();
        let bars = spec.hermite_bars();
        assert!(bars.b0.abs() < 1e-11);
        assert!(bars.b1.abs() < 1e-11);
        assert_relative_eq!(bars.b_star_sq, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn limit_kernel_endpoints() {
        let spec = ActivationSpec::with_default_depth(Activation::Relu).unwrap();
        // t = 1: h_RF(1) = E[σ²]; t = 0: h_RF(0) = b̄₀², h_NT(0) = 0.
        assert_relative_eq!(spec.h_rf_limit(1.0).unwrap(), 0.5, epsilon = 1e-9);
        assert_relative_eq!(
            spec.h_rf_limit(0.0).unwrap(),
            INV_SQRT_2PI * INV_SQRT_2PI,
            epsilon = 1e-10
        );
        assert_eq!(spec.h_nt_limit(0.0).unwrap(), 0.0);
        assert!(spec.h_rf_limit(1.2).is_err());
    }

    #[test]
    fn relu_rf_kernel_closed_form() {
        // h_RF(t) = (√(1−t²) + t(π − arccos t))/(2π) for ReLU.
        let spec = ActivationSpec::with_default_depth(Activation::Relu).unwrap();
        for &t in &[-0.8f64, -0.3, 0.2, 0.6, 0.95] {
            let want = ((1.0 - t * t).sqrt() + t * (std::f64::consts::PI - t.acos()))
                / (2.0 * std::f64::consts::PI);
            assert_relative_eq!(spec.h_rf_limit(t).unwrap(), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn relu_nt_kernel_closed_form() {
        // h_NT(t) = t(π − arccos t)/(2π).
        let spec = ActivationSpec::with_default_depth(Activation::Relu).unwrap();
        for &t in &[-0.7f64, 0.1, 0.5, 0.9] {
            let want = t * (std::f64::consts::PI - t.acos()) / (2.0 * std::f64::consts::PI);
            assert_relative_eq!(spec.h_nt_limit(t).unwrap(), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn finite_d_kernel_converges_to_limit() {
        // h^{(d)} → h as d → ∞ (smooth activation).
        let act = Activation::Tanh { scale: 1.0 };
        let spec = ActivationSpec::with_default_depth(act.clone()).unwrap();
        let t = 0.4;
        let want_rf = spec.h_rf_limit(t).unwrap();
        let want_nt = spec.h_nt_limit(t).unwrap();
        let mut prev_err = f64::INFINITY;
        for &d in &[10usize, 40, 160] {
            let sk = SphereKernels::new(d, &[]).unwrap();
            let err = (sk.h_rf_d(&act, t) - want_rf).abs().max((sk.h_nt_d(&act, t) - want_nt).abs());
            assert!(err < prev_err + 1e-12, "finite-d kernel error should shrink");
            prev_err = err;
        }
        assert!(prev_err < 2e-3);
    }

    #[test]
    fn finite_d_kernel_diagonal_is_sphere_moment() {
        // t = 1: h_RF^{(d)}(1) = E_w[σ(⟨w,x⟩)²] with ⟨w,x⟩ the scaled
        // first coordinate.
        let act = Activation::SquareHalf;
        let d = 12usize;
        let sk = SphereKernels::new(d, &[]).unwrap();
        let q = SphereQuadrature::new(d, (d as f64).sqrt(), 6).unwrap();
        let want = q.integrate(|u| act.eval(u).powi(2));
        assert_relative_eq!(sk.h_rf_d(&act, 1.0), want, max_relative = 1e-9);
    }

    #[test]
    fn finite_d_relu_matches_mc() {
        // Monte Carlo oracle for the kinked inner integral.
        use rand::SeedableRng;
        let act = Activation::Relu;
        let d = 10usize;
        let sk = SphereKernels::new(d, &act.kinks()).unwrap();
        let t: f64 = 0.3;
        let got = sk.h_rf_d(&act, t);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let radius = (d as f64).sqrt();
        let x1 = super::super::sphere::sample_sphere(d, radius, &mut rng);
        // Build x2 at angle cosine t from x1.
        let mut e = super::super::sphere::sample_sphere(d, 1.0, &mut rng);
        let proj = e.dot(&x1) / x1.norm_squared();
        e -= &x1 * proj;
        e /= e.norm();
        let x2 = &x1 * t + e * radius * (1.0 - t * t).sqrt();
        let n_mc = 400_000;
        let mut vals = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let w = super::super::sphere::sample_sphere(d, 1.0, &mut rng);
            vals.push(act.eval(w.dot(&x1)) * act.eval(w.dot(&x2)));
        }
        let stats = crate::mc::MeanSem::from_samples(&vals);
        assert!(
            (got - stats.mean).abs() <= 4.0 * stats.sem,
            "h_RF^(d) {got} vs MC {} ± {}",
            stats.mean,
            stats.sem
        );
    }
}
