//! Quadrature rules: Gauss–Hermite for Gaussian expectations, Gauss–Legendre
//! panels for weighted integrals with known kink locations.
//!
//! All Gaussian expectations use the probabilists' convention
//! `E f(G) = ∫ f(x) e^{-x²/2} dx / √(2π)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Truncation radius for Gaussian panel integrals; the discarded mass is
/// below 1e-31.
const GAUSS_RADIUS: f64 = 12.0;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    // (1 − x²) P_n′ = n (P_{n−1} − x P_n).
    let d = n as f64 * (p0 - x * p1) / (1.0 - x * x);
    (p1, d)
}

/// Probabilists' Gauss–Hermite rule: exact for polynomials of degree
/// `2n − 1` against `N(0,1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        // Golub–Welsch on the Jacobi matrix of He_k: off-diagonals √k.
        let mut j = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let eig = j.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Shared rule of the given order.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// A fixed list of nodes and weights for some weighted measure.
#[derive(Debug, Clone)]
pub struct WeightedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedRule {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalize(&mut self) {
        let m = self.total_mass();
        for w in &mut self.weights {
            *w /= m;
        }
    }
}

/// Composite Gauss–Legendre rule for `∫ w(x) f(x) dx` over `[lo, hi]` with
/// panel boundaries forced through `splits`. Panel boundaries follow a
/// cosine grading, which clusters nodes near the endpoints where the sphere
/// coordinate density loses smoothness.
pub fn panel_rule<W: Fn(f64) -> f64>(
    lo: f64,
    hi: f64,
    splits: &[f64],
    segments: usize,
    gl_order: usize,
    weight: W,
) -> WeightedRule {
    let (gx, gw) = gauss_legendre(gl_order);
    let mut bounds: Vec<f64> = (0..=segments)
        .map(|i| {
            let theta = std::f64::consts::PI * i as f64 / segments as f64;
            let u = -(theta.cos());
            lo + (hi - lo) * (u + 1.0) / 2.0
        })
        .collect();
    for &s in splits {
        if s > lo && s < hi {
            bounds.push(s);
        }
    }
    bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bounds.dedup();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for seg in bounds.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b - a <= 0.0 {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gx.iter().zip(&gw) {
            let t = mid + half * x;
            nodes.push(t);
            weights.push(half * w * weight(t));
        }
    }
    WeightedRule { nodes, weights }
}

/// `E f(G)` for piecewise-smooth `f` with known kink locations, by composite
/// panels split at the kinks, doubling panel count until two refinements
/// agree to `tol` relative.
pub fn gaussian_expect_kinked<F: Fn(f64) -> f64>(f: F, kinks: &[f64], tol: f64) -> Result<f64> {
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut segments = 16;
    let mut prev = f64::NAN;
    for _ in 0..8 {
        let rule = panel_rule(-GAUSS_RADIUS, GAUSS_RADIUS, kinks, segments, 24, density);
        let mut val = 0.0;
        let mut int_abs = 0.0;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let fx = f(x);
            val += w * fx;
            int_abs += w * fx.abs();
        }
        if prev.is_finite() {
            // Absolute tolerance below unit scale plus a roundoff allowance
            // for integrands with large cancelling lobes.
            let scale = val.abs().max(prev.abs()).max(1.0);
            if (val - prev).abs() <= tol * scale + 64.0 * f64::EPSILON * int_abs {
                return Ok(val);
            }
        }
        prev = val;
        segments *= 2;
    }
    Err(Error::QuadratureFailure(format!(
        "Gaussian panel integral did not stabilize to {tol:e} (last value {prev:.6e})"
    )))
}

/// `E f(G₁) g(tG₁ + √(1−t²) G₂)` for `(G₁,G₂)` independent standard normal.
///
/// Nested kink-aware quadrature with fixed resolution per level: the inner
/// integral shifts the kinks of `g` to `(kink − t·u)/√(1−t²)` for each outer
/// node `u`. Convergence is checked once on the full double integral by
/// doubling both resolutions.
pub fn gaussian_pair_expect<F, G>(f: F, g: G, t: f64, kinks_f: &[f64], kinks_g: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("correlation t = {t} outside [−1, 1]")));
    }
    let s = (1.0 - t * t).max(0.0).sqrt();
    if s < 1e-8 {
        // Perfectly (anti)correlated: one-dimensional reduction.
        let sign = if t >= 0.0 { 1.0 } else { -1.0 };
        let mut kinks: Vec<f64> = kinks_f.to_vec();
        kinks.extend(kinks_g.iter().map(|&k| sign * k));
        return gaussian_expect_kinked(|x| f(x) * g(sign * x), &kinks, tol);
    }
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let inner_smooth = GaussHermite::cached(200);
    let eval = |outer_segs: usize, inner_segs: usize| -> (f64, f64) {
        let outer = panel_rule(-GAUSS_RADIUS, GAUSS_RADIUS, kinks_f, outer_segs, 24, density);
        let mut val = 0.0;
        let mut int_abs = 0.0;
        for (&u, &wu) in outer.nodes.iter().zip(&outer.weights) {
            if wu == 0.0 {
                continue;
            }
            let fu = f(u);
            if fu == 0.0 {
                continue;
            }
            let inner_val = if kinks_g.is_empty() {
                inner_smooth.expect(|z| g(t * u + s * z))
            } else {
                let shifted: Vec<f64> = kinks_g.iter().map(|&k| (k - t * u) / s).collect();
                panel_rule(-GAUSS_RADIUS, GAUSS_RADIUS, &shifted, inner_segs, 16, density)
                    .integrate(|z| g(t * u + s * z))
            };
            val += wu * fu * inner_val;
            int_abs += (wu * fu * inner_val).abs();
        }
        (val, int_abs)
    };
    let (mut prev, mut prev_abs) = eval(32, 24);
    for &(o, i) in &[(64usize, 48usize), (128, 96), (256, 128)] {
        let (next, next_abs) = eval(o, i);
        let scale = next.abs().max(prev.abs()).max(1.0);
        if (next - prev).abs() <= tol * scale + 64.0 * f64::EPSILON * next_abs.max(prev_abs) {
            return Ok(next);
        }
        prev = next;
        prev_abs = next_abs;
    }
    Err(Error::QuadratureFailure(format!(
        "pair expectation did not stabilize to {tol:e} (last value {prev:.6e})"
    )))
}

/// `E f(U, V)` for `(U, V)` centered bivariate Gaussian with covariance
/// `[[c11, c12], [c12, c22]]`, by tensor Gauss–Hermite (smooth integrands).
/// Degenerate covariances reduce to the perfectly correlated 1-d case.
pub fn bivariate_expect<F>(order: usize, c11: f64, c12: f64, c22: f64, f: F) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let gh = GaussHermite::cached(order);
    let s1 = c11.max(0.0).sqrt();
    if s1 == 0.0 {
        return gh.expect(|z| f(0.0, c22.max(0.0).sqrt() * z));
    }
    let l21 = c12 / s1;
    let rem = c22 - l21 * l21;
    if rem <= 1e-14 * c22.abs().max(1.0) {
        return gh.expect(|z| f(s1 * z, l21 * z));
    }
    let l22 = rem.sqrt();
    let mut acc = 0.0;
    for (&x1, &w1) in gh.nodes.iter().zip(&gh.weights) {
        let u = s1 * x1;
        let mut inner = 0.0;
        for (&x2, &w2) in gh.nodes.iter().zip(&gh.weights) {
            inner += w2 * f(u, l21 * x1 + l22 * x2);
        }
        acc += w1 * inner;
    }
    acc
}

/// Chebyshev interpolant on `[a, b]`, for caching smooth kernel profiles
/// that are expensive to evaluate pointwise.
#[derive(Debug, Clone)]
pub struct ChebInterp {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl ChebInterp {
    /// Fits `n` Chebyshev coefficients from the Chebyshev nodes of `f`.
    pub fn fit<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> Self {
        assert!(n >= 2 && b > a);
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                let x = 0.5 * (a + b) + 0.5 * (b - a) * theta.cos();
                f(x)
            })
            .collect();
        let mut coeffs = vec![0.0; n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, v) in vals.iter().enumerate() {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                acc += v * (j as f64 * theta).cos();
            }
            *c = 2.0 * acc / n as f64;
        }
        coeffs[0] *= 0.5;
        ChebInterp { a, b, coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let u = u.clamp(-1.0, 1.0);
        // Clenshaw recurrence.
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().rev() {
            let tmp = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = tmp;
        }
        b1 - u * b2
    }
}
