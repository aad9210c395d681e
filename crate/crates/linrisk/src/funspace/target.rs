//! Target functions on the sphere of radius `√d` and their decomposition
//! into spherical-harmonic degrees.
//!
//! Degree masses drive every staircase prediction: for
//! `d^ℓ ≪ min(n, parameters) ≪ d^{ℓ+1}` the lazy-regime risk floor is
//! `‖P_{>ℓ} f*‖²`. For a ridge target `f*(x) = φ(⟨w*,x⟩)` with `‖w*‖ = 1`,
//!
//! ```text
//! ‖P_k f*‖² = B(d,k) · ( E[φ(t/√d) Q_k^{(d)}(t)] )² ,
//! ```
//!
//! with `t = √d⟨w*,x⟩` following the coordinate law; as `d → ∞` this mass
//! converges to `μ_k(φ)²/k!`, whose tail `b_ℓ = Σ_{k>ℓ} μ_k(φ)²/k!` is the
//! Gaussian-measure residual.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::activation::Activation;
use super::hermite::{gaussian_norm_sq, hermite_coeffs};
use super::sphere::{sample_sphere, sphere_dim, Gegenbauer, SphereQuadrature};
use crate::error::{Error, Result};
use crate::mc::replica_rng;

/// Default depth of the cached degree decomposition.
pub const TARGET_K_MAX: usize = 12;

/// A unit-direction harmonic component `c · √B(d,k) · Q_k(⟨√d v, x⟩)`.
#[derive(Debug, Clone)]
pub struct HarmonicTerm {
    pub degree: usize,
    pub direction: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone)]
enum TargetKind {
    Linear {
        beta: DVector<f64>,
    },
    Ridge {
        phi: Activation,
        w_star: DVector<f64>,
        /// Degree masses `‖P_k f‖²` up to `k_max`, from quadrature.
        masses: Vec<f64>,
        norm_sq: f64,
    },
    Mixture {
        terms: Vec<HarmonicTerm>,
        directions: Vec<DVector<f64>>,
        geg: Gegenbauer,
    },
}

/// A target function on `S^{d-1}(√d)`.
#[derive(Debug, Clone)]
pub struct TargetFunction {
    d: usize,
    kind: TargetKind,
}

impl TargetFunction {
    /// `f(x) = ⟨β, x⟩` (pure degree-1 mass `‖β‖²`).
    pub fn linear(beta: Vec<f64>) -> Self {
        TargetFunction { d: beta.len(), kind: TargetKind::Linear { beta: DVector::from_vec(beta) } }
    }

    /// Ridge function `f(x) = φ(⟨w*, x⟩)` with `w*` normalized to unit norm.
    pub fn ridge(d: usize, phi: Activation, w_star: Option<Vec<f64>>) -> Result<Self> {
        let mut w = match w_star {
            Some(v) => {
                if v.len() != d {
                    return Err(Error::dim(format!("w* has length {} for d = {d}", v.len())));
                }
                DVector::from_vec(v)
            }
            None => {
                let mut e = DVector::zeros(d);
                e[0] = 1.0;
                e
            }
        };
        let norm = w.norm();
        if norm == 0.0 {
            return Err(Error::invalid("w* must be nonzero"));
        }
        w /= norm;
        let geg = Gegenbauer::new(d, TARGET_K_MAX)?;
        let quad = SphereQuadrature::with_splits(
            d,
            d as f64,
            TARGET_K_MAX + 1,
            &phi
                .kinks()
                .iter()
                .map(|k| k * (d as f64).sqrt())
                .collect::<Vec<_>>(),
        )?;
        let sd = (d as f64).sqrt();
        let norm_sq = quad.integrate(|t| phi.eval(t / sd).powi(2));
        let masses: Vec<f64> = (0..=TARGET_K_MAX)
            .map(|k| {
                let c = quad.integrate(|t| phi.eval(t / sd) * geg.eval(k, t));
                sphere_dim(d, k) * c * c
            })
            .collect();
        Ok(TargetFunction { d, kind: TargetKind::Ridge { phi, w_star: w, masses, norm_sq } })
    }

    /// Mixture of Gegenbauer functions of fixed directions; directions are
    /// normalized to unit norm.
    pub fn harmonic_mixture(
        d: usize,
        terms: Vec<HarmonicTerm>,
        directions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut dirs = Vec::with_capacity(directions.len());
        for v in directions {
            if v.len() != d {
                return Err(Error::dim(format!("direction has length {} for d = {d}", v.len())));
            }
            let mut v = DVector::from_vec(v);
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::invalid("zero direction"));
            }
            v /= n;
            dirs.push(v);
        }
        let k_max = terms.iter().map(|t| t.degree).max().unwrap_or(0);
        for t in &terms {
            if t.direction >= dirs.len() {
                return Err(Error::invalid(format!("direction index {} out of range", t.direction)));
            }
        }
        let geg = Gegenbauer::new(d, k_max.max(1))?;
        Ok(TargetFunction { d, kind: TargetKind::Mixture { terms, directions: dirs, geg } })
    }

    /// Rotationally invariant Gaussian-process target: degree-`k` weight
    /// `F_k² = degree_weights[k]`, realized as a mixture over `m` random
    /// directions with i.i.d. `N(0, F_k²/m)` coefficients, so that
    /// `E‖P_k f‖² = F_k²` exactly.
    pub fn gp(d: usize, degree_weights: &[f64], m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("gp target needs m ≥ 1 directions"));
        }
        let mut rng = replica_rng(seed, 0);
        let directions: Vec<Vec<f64>> = (0..m)
            .map(|_| sample_sphere(d, 1.0, &mut rng).iter().copied().collect())
            .collect();
        let mut terms = Vec::new();
        for (k, &fk2) in degree_weights.iter().enumerate() {
            if fk2 < 0.0 {
                return Err(Error::invalid("degree weights must be nonnegative"));
            }
            if fk2 == 0.0 {
                continue;
            }
            let sd = (fk2 / m as f64).sqrt();
            for j in 0..m {
                let g: f64 = rng.sample(StandardNormal);
                terms.push(HarmonicTerm { degree: k, direction: j, coeff: sd * g });
            }
        }
        Self::harmonic_mixture(d, terms, directions)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let sd = (self.d as f64).sqrt();
        match &self.kind {
            TargetKind::Linear { beta } => beta.dot(x),
            TargetKind::Ridge { phi, w_star, .. } => phi.eval(w_star.dot(x)),
            TargetKind::Mixture { terms, directions, geg } => terms
                .iter()
                .map(|t| {
                    let u = sd * directions[t.direction].dot(x);
                    t.coeff * sphere_dim(self.d, t.degree).sqrt() * geg.eval(t.degree, u)
                })
                .sum(),
        }
    }

    /// Evaluates the target on each row of `x`.
    pub fn eval_rows(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |i, _| self.eval(&x.row(i).transpose()))
    }

    /// `‖f‖²_{L²}` (exact for linear/mixture, quadrature for ridge).
    pub fn norm_sq(&self) -> f64 {
        match &self.kind {
            TargetKind::Linear { beta } => beta.norm_squared(),
            TargetKind::Ridge { norm_sq, .. } => *norm_sq,
            TargetKind::Mixture { .. } => self.degree_masses_mixture().iter().sum(),
        }
    }

    fn degree_masses_mixture(&self) -> Vec<f64> {
        let TargetKind::Mixture { terms, directions, geg } = &self.kind else {
            unreachable!()
        };
        let k_max = terms.iter().map(|t| t.degree).max().unwrap_or(0);
        let mut masses = vec![0.0; k_max + 1];
        for k in 0..=k_max {
            let ks: Vec<&HarmonicTerm> = terms.iter().filter(|t| t.degree == k).collect();
            let mut acc = 0.0;
            for a in &ks {
                for b in &ks {
                    let dot = self.d as f64 * directions[a.direction].dot(&directions[b.direction]);
                    acc += a.coeff * b.coeff * geg.eval(k, dot);
                }
            }
            masses[k] = acc;
        }
        masses
    }

    /// Degree masses `‖P_k f‖²` for `k = 0..=k_max_available`.
    ///
    /// For ridge targets the list stops at the cached depth; the remainder
    /// `‖f‖² − Σ masses` is genuine mass above that depth and is accounted
    /// for by [`TargetFunction::projection_masses`].
    pub fn degree_masses(&self) -> Vec<f64> {
        match &self.kind {
            TargetKind::Linear { beta } => vec![0.0, beta.norm_squared()],
            TargetKind::Ridge { masses, .. } => masses.clone(),
            TargetKind::Mixture { .. } => self.degree_masses_mixture(),
        }
    }

    /// `(‖P_{≤ℓ} f‖², ‖P_{>ℓ} f‖²)`; the two always sum to `‖f‖²`.
    pub fn projection_masses(&self, ell: usize) -> (f64, f64) {
        let masses = self.degree_masses();
        let below: f64 = masses.iter().take(ell + 1).sum();
        let above = (self.norm_sq() - below).max(0.0);
        (below, above)
    }
}

/// Gaussian-measure residual `b_ℓ = Σ_{k>ℓ} μ_k(φ)²/k!` of a scalar
/// function: the `d → ∞` lazy-training risk floor for the ridge target
/// `φ(⟨w*,x⟩)`. Strictly positive unless `φ` is a degree-`ℓ` polynomial.
pub fn residual_mass_bl(phi: &Activation, ell: usize) -> Result<f64> {
    let kinks = phi.kinks();
    let norm = gaussian_norm_sq(|x| phi.eval(x), &kinks)?;
    let mu = hermite_coeffs(|x| phi.eval(x), &kinks, ell)?;
    let mut fact = 1.0;
    let mut low = 0.0;
    for (k, m) in mu.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        low += m * m / fact;
    }
    Ok((norm - low).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_target_masses() {
        let t = TargetFunction::linear(vec![0.6, 0.0, -0.8]);
        let (below, above) = t.projection_masses(1);
        assert_relative_eq!(below, 1.0, epsilon = 1e-12);
        assert!(above.abs() < 1e-12);
    }

    #[test]
    fn ridge_he2_masses() {
        // f = He₂(⟨w*,x⟩) at finite d: all mass at degree 2,
        // ‖f‖² = 2(d−1)/(d+2), converging to μ₂²/2! = 2 as d → ∞.
        for &d in &[10usize, 25, 200] {
            let t = TargetFunction::ridge(d, Activation::HermiteCombo(vec![(2, 1.0)]), None).unwrap();
            let df = d as f64;
            let want = 2.0 * (df - 1.0) / (df + 2.0);
            assert_relative_eq!(t.norm_sq(), want, max_relative = 1e-8);
            let masses = t.degree_masses();
            assert_relative_eq!(masses[2], want, max_relative = 1e-8);
            assert!(masses[0].abs() < 1e-10 && masses[1].abs() < 1e-10);
            let (_, above1) = t.projection_masses(1);
            assert_relative_eq!(above1, want, max_relative = 1e-8);
            let (_, above2) = t.projection_masses(2);
            assert!(above2.abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_masses_sum_to_norm() {
        let d = 15usize;
        let t = TargetFunction::ridge(d, Activation::Relu, None).unwrap();
        let masses = t.degree_masses();
        let total: f64 = masses.iter().sum();
        // ReLU has slow mass decay; depth 12 captures all but a small tail.
        assert!(total <= t.norm_sq() + 1e-10);
        assert!(t.norm_sq() - total < 5e-3 * t.norm_sq());
    }

    #[test]
    fn three_hermite_target_norm() {
        // √(4/10)He₁ + √(2/10)He₂ + √(1/120)He₄:
        // ‖f‖² → 0.4·1 + 0.2·2 + (1/120)·24 = 1 as d → ∞.
        let phi = Activation::HermiteCombo(vec![
            (1, (0.4_f64).sqrt()),
            (2, (0.2_f64).sqrt()),
            (4, (1.0_f64 / 120.0).sqrt()),
        ]);
        let t1000 = TargetFunction::ridge(1000, phi.clone(), None).unwrap();
        assert!((t1000.norm_sq() - 1.0).abs() < 0.01);
        // d → ∞ per-degree masses 0.4, 0.4, 0.2.
        let masses = t1000.degree_masses();
        assert!((masses[1] - 0.4).abs() < 0.01);
        assert!((masses[2] - 0.4).abs() < 0.01);
        assert!((masses[4] - 0.2).abs() < 0.01);
    }

    #[test]
    fn ridge_eval_matches_phi() {
        let d = 8;
        let t = TargetFunction::ridge(d, Activation::Tanh { scale: 1.0 }, None).unwrap();
        let mut x = DVector::zeros(d);
        x[0] = 1.3;
        x[1] = (d as f64 - 1.3 * 1.3).sqrt();
        assert_relative_eq!(t.eval(&x), 1.3_f64.tanh(), epsilon = 1e-12);
    }

    #[test]
    fn mixture_mass_via_gram() {
        // Two same-degree terms with known overlap Q_k(d⟨v1,v2⟩).
        let d = 10usize;
        let mut v2 = vec![0.0; d];
        v2[0] = 1.0;
        let mut v1 = vec![0.0; d];
        v1[1] = 1.0;
        let t = TargetFunction::harmonic_mixture(
            d,
            vec![
                HarmonicTerm { degree: 2, direction: 0, coeff: 1.0 },
                HarmonicTerm { degree: 2, direction: 1, coeff: 2.0 },
            ],
            vec![v1, v2],
        )
        .unwrap();
        // Orthogonal directions: overlap Q_2(0).
        let geg = Gegenbauer::new(d, 2).unwrap();
        let want = 1.0 + 4.0 + 2.0 * 1.0 * 2.0 * geg.eval(2, 0.0);
        assert_relative_eq!(t.norm_sq(), want, max_relative = 1e-10);
    }

    #[test]
    fn gp_target_mass_concentrates() {
        // Average realized degree mass over seeds ≈ F_k².
        let d = 12usize;
        let weights = [0.0, 1.0, 0.5];
        let reps = 200;
        let mut acc = vec![0.0; 3];
        for seed in 0..reps {
            let t = TargetFunction::gp(d, &weights, 6, seed).unwrap();
            let m = t.degree_masses();
            for k in 0..3 {
                acc[k] += m[k] / reps as f64;
            }
        }
        assert!(acc[0].abs() < 1e-12);
        assert!((acc[1] - 1.0).abs() < 0.12, "degree-1 mass {}", acc[1]);
        assert!((acc[2] - 0.5).abs() < 0.12, "degree-2 mass {}", acc[2]);
    }

    #[test]
    fn gp_requires_realized_seed_determinism() {
        let d = 6;
        let a = TargetFunction::gp(d, &[0.0, 1.0], 4, 7).unwrap();
        let b = TargetFunction::gp(d, &[0.0, 1.0], 4, 7).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0, -1.0, 1.0]);
        assert_eq!(a.eval(&x), b.eval(&x));
    }

    #[test]
    fn residual_mass_examples() {
        // φ = He₂: b₂ = 0, b₁ = 2.
        let he2 = Activation::HermiteCombo(vec![(2, 1.0)]);
        assert!(residual_mass_bl(&he2, 2).unwrap() < 1e-10);
        assert_relative_eq!(residual_mass_bl(&he2, 1).unwrap(), 2.0, epsilon = 1e-10);
        // φ = ReLU: b₁ = 1/2 − 1/(2π) − 1/4.
        let want = 0.5 - 1.0 / (2.0 * std::f64::consts::PI) - 0.25;
        assert_relative_eq!(residual_mass_bl(&Activation::Relu, 1).unwrap(), want, epsilon = 1e-10);
        // Non-polynomial φ: strictly positive at every level.
        let tanh = Activation::Tanh { scale: 1.0 };
        for ell in 0..6 {
            assert!(residual_mass_bl(&tanh, ell).unwrap() > 0.0);
        }
    }
}
