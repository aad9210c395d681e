//! Spherical harmonics bookkeeping: the dimension counts `B(d,k)`, the
//! coordinate law `ν_d`, and Gegenbauer polynomials `Q_k^{(d)}`.
//!
//! For `x` uniform on the sphere of radius `√d`, the scaled first coordinate
//! `t = √d x₁ ∈ [−d, d]` has density proportional to `(1 − (t/d)²)^{(d−3)/2}`.
//! The Gegenbauer polynomials used here are the projector kernels: the
//! orthogonal family under that law, normalized so `Q_k^{(d)}(d) = 1`, with
//! `⟨Q_j, Q_k⟩ = δ_{jk}/B(d,k)`.
//!
//! They are built by the monic three-term recurrence with coefficients
//! measured against a validated quadrature for the coordinate law (the
//! measure is symmetric, so the recurrence is `p_{k+1} = t·p_k − β_k p_{k−1}`),
//! then endpoint-normalized. Classical ultraspherical recurrences serve as an
//! independent oracle in the tests.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::quad::{panel_rule, WeightedRule};
use crate::error::{Error, Result};

/// Dimension `B(d,k)` of the space of degree-`k` spherical harmonics on
/// `S^{d-1}`: `B(d,0) = 1`, `B(d,k) = ((2k+d−2)/k)·C(k+d−3, k−1)`.
pub fn sphere_dim(d: usize, k: usize) -> f64 {
    assert!(d >= 2, "sphere_dim needs d ≥ 2");
    if k == 0 {
        return 1.0;
    }
    let df = d as f64;
    let kf = k as f64;
    let mut binom = 1.0;
    for i in 1..k {
        binom *= (df - 2.0 + i as f64) / i as f64;
    }
    (2.0 * kf + df - 2.0) / kf * binom
}

/// Exact even moments of the coordinate law: for the first coordinate `u` of
/// a uniform point on the unit sphere `S^{dim-1}`,
/// `E[u^{2m}] = Π_{j=1}^m (2j−1)/(dim+2j−2)`; scaling by `radius` multiplies
/// by `radius^{2m}`.
pub fn coord_moment(dim: usize, radius: f64, m: usize) -> f64 {
    let mut val = 1.0;
    for j in 1..=m {
        val *= (2.0 * j as f64 - 1.0) / (dim as f64 + 2.0 * j as f64 - 2.0);
    }
    val * radius.powi(2 * m as i32)
}

/// Quadrature for the scaled sphere coordinate law: density proportional to
/// `(1 − (t/radius)²)^{(dim−3)/2}` on `[−radius, radius]`, weights summing
/// to one, validated against the closed-form moments.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub dim: usize,
    pub radius: f64,
    pub rule: WeightedRule,
}

impl SphereQuadrature {
    /// Builds a rule that integrates polynomials up to degree `2·k_max`
    /// exactly to `1e-10` relative (checked on the even moments).
    pub fn new(dim: usize, radius: f64, k_max: usize) -> Result<Self> {
        Self::with_splits(dim, radius, k_max, &[])
    }

    /// Same, with panel boundaries forced through `splits` so that
    /// piecewise-smooth integrands (kinked activations) stay accurate.
    pub fn with_splits(dim: usize, radius: f64, k_max: usize, splits: &[f64]) -> Result<Self> {
        if dim < 3 {
            return Err(Error::invalid(format!(
                "sphere coordinate quadrature needs dim ≥ 3 (density exponent (dim−3)/2), got {dim}"
            )));
        }
        let expo = (dim as f64 - 3.0) / 2.0;
        let weight = move |t: f64| {
            let u = 1.0 - (t / radius) * (t / radius);
            if u <= 0.0 {
                0.0
            } else {
                u.powf(expo)
            }
        };
        let mut segments = 24;
        while segments <= 1536 {
            let mut rule = panel_rule(-radius, radius, splits, segments, 24, &weight);
            rule.normalize();
            let ok = (1..=k_max.max(2) + 1).all(|m| {
                let exact = coord_moment(dim, radius, m);
                let got = rule.integrate(|t| t.powi(2 * m as i32));
                (got - exact).abs() <= 1e-10 * exact.abs().max(1e-300)
            });
            let odd_ok = {
                let scale = coord_moment(dim, radius, k_max.max(1));
                rule.integrate(|t| t.powi(2 * k_max as i32 - 1)).abs() <= 1e-10 * scale.max(1.0)
            };
            if ok && odd_ok {
                return Ok(SphereQuadrature { dim, radius, rule });
            }
            segments *= 2;
        }
        Err(Error::QuadratureFailure(format!(
            "sphere coordinate rule (dim {dim}, radius {radius}) failed moment validation up to degree {}",
            2 * k_max
        )))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.rule.integrate(f)
    }
}

/// Gegenbauer family `Q_0, …, Q_{k_max}` for dimension `d`, on `[−d, d]`.
#[derive(Debug, Clone)]
pub struct Gegenbauer {
    pub d: usize,
    pub k_max: usize,
    /// Monic recurrence coefficients `β_1, …, β_{k_max}`.
    beta: Vec<f64>,
    /// Monic values at the endpoint `t = d` (the normalizers).
    endpoint: Vec<f64>,
    /// Monic squared norms under the coordinate law.
    norm_sq: Vec<f64>,
}

impl Gegenbauer {
    pub fn new(d: usize, k_max: usize) -> Result<Self> {
        let quad = SphereQuadrature::new(d, d as f64, k_max + 1)?;
        let mut beta = vec![0.0; k_max + 1];
        let mut norm_sq = vec![0.0; k_max + 1];
        norm_sq[0] = 1.0;
        if k_max >= 1 {
            norm_sq[1] = quad.integrate(|t| t * t);
        }
        for k in 1..k_max {
            beta[k] = norm_sq[k] / norm_sq[k - 1];
            let bk = beta.clone();
            norm_sq[k + 1] = quad.integrate(|t| {
                let v = monic_eval_with(&bk, k + 1, t);
                v * v
            });
        }
        if k_max >= 1 {
            beta[k_max] = norm_sq[k_max] / norm_sq[k_max - 1];
        }
        let endpoint: Vec<f64> = (0..=k_max).map(|k| monic_eval_with(&beta, k, d as f64)).collect();
        Ok(Gegenbauer { d, k_max, beta, endpoint, norm_sq })
    }

    /// `Q_k^{(d)}(t)`, normalized so `Q_k(d) = 1`.
    pub fn eval(&self, k: usize, t: f64) -> f64 {
        assert!(k <= self.k_max, "degree {k} above cached k_max {}", self.k_max);
        monic_eval_with(&self.beta, k, t) / self.endpoint[k]
    }

    /// `⟨Q_k, Q_k⟩` under the coordinate law; equals `1/B(d,k)`.
    pub fn q_norm_sq(&self, k: usize) -> f64 {
        self.norm_sq[k] / (self.endpoint[k] * self.endpoint[k])
    }
}

fn monic_eval_with(beta: &[f64], k: usize, t: f64) -> f64 {
    // p_0 = 1, p_1 = t, p_{j+1} = t p_j − β_j p_{j−1} (symmetric measure).
    if k == 0 {
        return 1.0;
    }
    let mut pm = 1.0;
    let mut p = t;
    for j in 1..k {
        let next = t * p - beta[j] * pm;
        pm = p;
        p = next;
    }
    p
}

/// Fixed-resolution rule for the unit-radius coordinate law of `S^{dim-1}`
/// with panel boundaries at `splits` (for inner integrals whose kink
/// locations move with the outer node, where per-node moment validation
/// would be wasteful).
pub fn panel_inner_rule(dim: usize, splits: &[f64]) -> WeightedRule {
    let expo = (dim as f64 - 3.0) / 2.0;
    let weight = move |t: f64| {
        let u = 1.0 - t * t;
        if u <= 0.0 {
            0.0
        } else {
            u.powf(expo)
        }
    };
    let mut rule = panel_rule(-1.0, 1.0, splits, 48, 16, weight);
    rule.normalize();
    rule
}

/// Uniform point on the sphere of the given radius. Zero-norm draws cannot
/// occur with continuous Gaussians.
pub fn sample_sphere<R: Rng>(d: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = g.norm();
    g * (radius / n)
}

/// Level coefficients `ξ_{d,k}²` of an inner-product kernel
/// `K(x₁,x₂) = h(⟨x₁,x₂⟩/d)` on the sphere of radius `√d`:
/// `ξ_{d,k}² = E[Q_k(t) h(t/d)]` under the coordinate law of `t = √d x₁`.
#[derive(Debug, Clone)]
pub struct LevelCoeffs {
    pub d: usize,
    pub xi_sq: Vec<f64>,
    /// `B(d,k)` alongside each level.
    pub b_dk: Vec<f64>,
    /// Genericity report: `c_k ≈ ξ_{d,k}² B(d,k)` (should converge to a
    /// positive constant for generic kernels).
    pub c_k: Vec<f64>,
    /// False if some level came out negative beyond tolerance (kernel not
    /// PSD within the retained levels); tiny negatives are clamped to zero.
    pub psd_ok: bool,
}

pub fn kernel_level_coeffs<H>(h: H, d: usize, k_max: usize, kinks_t: &[f64]) -> Result<LevelCoeffs>
where
    H: Fn(f64) -> f64,
{
    let geg = Gegenbauer::new(d, k_max)?;
    let quad = SphereQuadrature::with_splits(d, d as f64, k_max + 1, kinks_t)?;
    let mut xi_sq = Vec::with_capacity(k_max + 1);
    let mut b_dk = Vec::with_capacity(k_max + 1);
    let mut psd_ok = true;
    let scale = quad.integrate(|t| h(t / d as f64).abs()).max(1e-300);
    for k in 0..=k_max {
        let mut v = quad.integrate(|t| geg.eval(k, t) * h(t / d as f64));
        if v < 0.0 {
            if v < -1e-10 * scale {
                psd_ok = false;
            }
            v = 0.0;
        }
        xi_sq.push(v);
        b_dk.push(sphere_dim(d, k));
    }
    let c_k = xi_sq.iter().zip(&b_dk).map(|(x, b)| x * b).collect();
    Ok(LevelCoeffs { d, xi_sq, b_dk, c_k, psd_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn harmonic_dimensions() {
        assert_eq!(sphere_dim(7, 0), 1.0);
        for d in [3usize, 10, 50] {
            assert_relative_eq!(sphere_dim(d, 1), d as f64);
        }
        assert_relative_eq!(sphere_dim(3, 2), 5.0);
        // B(d,2) = (d−1)(d+2)/2.
        assert_relative_eq!(sphere_dim(10, 2), 9.0 * 12.0 / 2.0);
        // Growth: B(d,k) ≈ d^k/k! for large d.
        let d = 2000usize;
        let approx = (d as f64).powi(3) / 6.0;
        assert!((sphere_dim(d, 3) / approx - 1.0).abs() < 5e-3);
    }

    #[test]
    fn quadrature_moments_and_mass() {
        for &(dim, radius) in &[(5usize, 5.0f64), (20, 20.0), (11, 1.0)] {
            let q = SphereQuadrature::new(dim, radius, 8).unwrap();
            assert_relative_eq!(q.rule.total_mass(), 1.0, epsilon = 1e-12);
            for m in 1..=8 {
                let exact = coord_moment(dim, radius, m);
                assert_relative_eq!(q.integrate(|t| t.powi(2 * m as i32)), exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gegenbauer_endpoint_low_degree_and_orthogonality() {
        for &d in &[5usize, 20, 100] {
            let g = Gegenbauer::new(d, 10).unwrap();
            let df = d as f64;
            for k in 0..=10 {
                assert_relative_eq!(g.eval(k, df), 1.0, epsilon = 1e-12);
            }
            // Q_1(t) = t/d.
            assert_relative_eq!(g.eval(1, 0.7 * df), 0.7, epsilon = 1e-10);
            // ⟨Q_k,Q_k⟩ = 1/B(d,k).
            for k in 0..=6 {
                assert_relative_eq!(g.q_norm_sq(k), 1.0 / sphere_dim(d, k), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn gegenbauer_cross_orthogonality_by_quadrature() {
        let d = 12usize;
        let g = Gegenbauer::new(d, 8).unwrap();
        let q = SphereQuadrature::new(d, d as f64, 9).unwrap();
        for j in 0..=6usize {
            for k in 0..=6usize {
                let val = q.integrate(|t| g.eval(j, t) * g.eval(k, t));
                let want = if j == k { 1.0 / sphere_dim(d, k) } else { 0.0 };
                assert!(
                    (val - want).abs() < 1e-8,
                    "⟨Q_{j},Q_{k}⟩ = {val}, want {want}"
                );
            }
        }
    }

    #[test]
    fn gegenbauer_matches_classical_ultraspherical() {
        // Independent oracle: Q_k(d·u) = C_k^{(d−2)/2}(u) / C_k^{(d−2)/2}(1).
        for &d in &[5usize, 20] {
            let lam = (d as f64 - 2.0) / 2.0;
            let g = Gegenbauer::new(d, 8).unwrap();
            for k in 0..=8usize {
                for &u in &[-0.9, -0.4, 0.0, 0.3, 0.8] {
                    let mut c0 = 1.0;
                    let mut c1 = 2.0 * lam * u;
                    let classical = if k == 0 {
                        1.0
                    } else {
                        for j in 2..=k {
                            let jf = j as f64;
                            let c2 = (2.0 * u * (jf + lam - 1.0) * c1
                                - (jf + 2.0 * lam - 2.0) * c0)
                                / jf;
                            c0 = c1;
                            c1 = c2;
                        }
                        c1
                    };
                    let mut e0 = 1.0;
                    let mut e1 = 2.0 * lam;
                    let endpoint = if k == 0 {
                        1.0
                    } else {
                        for j in 2..=k {
                            let jf = j as f64;
                            let e2 = (2.0 * (jf + lam - 1.0) * e1 - (jf + 2.0 * lam - 2.0) * e0) / jf;
                            e0 = e1;
                            e1 = e2;
                        }
                        e1
                    };
                    let want = classical / endpoint;
                    let got = g.eval(k, u * d as f64);
                    assert!(
                        (got - want).abs() < 1e-9,
                        "d={d} k={k} u={u}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn reproducing_property_by_sphere_mc() {
        // E_x Q_k(⟨x₁,x⟩) Q_k(⟨x,x₂⟩) = Q_k(⟨x₁,x₂⟩)/B(d,k) within 3 SEM.
        let d = 10usize;
        let g = Gegenbauer::new(d, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let radius = (d as f64).sqrt();
        let x1 = sample_sphere(d, radius, &mut rng);
        let x2 = sample_sphere(d, radius, &mut rng);
        let n_mc = 200_000;
        for k in 1..=3usize {
            let mut vals = Vec::with_capacity(n_mc);
            for _ in 0..n_mc {
                let x = sample_sphere(d, radius, &mut rng);
                vals.push(g.eval(k, x1.dot(&x)) * g.eval(k, x.dot(&x2)));
            }
            let stats = crate::mc::MeanSem::from_samples(&vals);
            let want = g.eval(k, x1.dot(&x2)) / sphere_dim(d, k);
            assert!(
                (stats.mean - want).abs() <= 3.0 * stats.sem,
                "k={k}: {} vs {want} (sem {})",
                stats.mean,
                stats.sem
            );
        }
    }

    #[test]
    fn linear_kernel_levels() {
        // h(t) = t is the degree-1 projector kernel: ξ² = 1/d at level 1.
        let d = 10usize;
        let lc = kernel_level_coeffs(|t| t, d, 5, &[]).unwrap();
        assert!(lc.psd_ok);
        assert_relative_eq!(lc.xi_sq[1], 1.0 / d as f64, max_relative = 1e-9);
        for k in [0usize, 2, 3, 4, 5] {
            assert!(lc.xi_sq[k].abs() < 1e-12, "level {k} should vanish");
        }
        // Constant kernel: all mass at level 0.
        let lc = kernel_level_coeffs(|_| 2.5, d, 4, &[]).unwrap();
        assert_relative_eq!(lc.xi_sq[0], 2.5, max_relative = 1e-12);
        assert!(lc.xi_sq[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn hermite_limit_of_gegenbauer() {
        // B(d,k)^{1/2} Q_k(√d·x) → He_k(x)/√(k!) pointwise as d grows.
        let xs = [-1.5, -0.5, 0.0, 0.8, 2.0];
        for &k in &[1usize, 2, 3] {
            let mut prev_err = f64::INFINITY;
            for &d in &[50usize, 200, 800] {
                let g = Gegenbauer::new(d, k).unwrap();
                let mut err: f64 = 0.0;
                for &x in &xs {
                    let lhs = sphere_dim(d, k).sqrt() * g.eval(k, (d as f64).sqrt() * x);
                    let rhs = super::super::hermite::hermite_he(k, x)
                        / (1..=k).map(|j| j as f64).product::<f64>().sqrt();
                    err = err.max((lhs - rhs).abs());
                }
                assert!(err < prev_err + 1e-12, "error should shrink with d (k={k}, d={d})");
                prev_err = err;
                if d == 800 {
                    assert!(err < 0.02, "k={k}: err {err} too large at d=800");
                }
            }
        }
    }
}
