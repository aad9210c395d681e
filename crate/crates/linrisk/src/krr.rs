//! Kernel ridge regression with inner-product kernels on the sphere.
//!
//! Kernels are `K(x₁,x₂) = h(⟨x₁,x₂⟩/d)` for data normalized to `‖x‖ = √d`.
//! The prediction function is `f̂_λ(x) = K(x,·)ᵀ(λI_n + K_n)⁻¹y`; `λ = 0+`
//! uses a spectral pseudo-solve (interpolation when `K_n` is invertible).
//!
//! In the polynomial regime `d^{ℓ+δ} ≤ n ≤ d^{ℓ+1−δ}` the risk plateaus at
//! the staircase value `‖P_{>ℓ}f*‖²`; near integer powers of `d` the
//! prediction is flagged near-threshold. The kernel matrix splits into a
//! low-frequency spiked part `K^{≤ℓ} = Σ_{k≤ℓ} ξ² B(d,k) Q_k`-Gram and a
//! high-frequency part concentrating on `γ(ℓ)·I` with
//! `γ(ℓ) = Σ_{k>ℓ} ξ_{d,k}² B(d,k) = h(1) − Σ_{k≤ℓ} ξ² B` — the self-induced
//! regularization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funspace::activation::SphereKernels;
use crate::funspace::quad::ChebInterp;
use crate::funspace::sphere::{kernel_level_coeffs, sample_sphere, Gegenbauer, LevelCoeffs};
use crate::funspace::{Activation, TargetFunction};
use crate::linalg::{opnorm_sym, spd_solve, sym_eigen, sym_eigenvalues};
use crate::mc::{run_replicas, MeanSem};

/// Kernel profile `h` on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelShape {
    /// `h(t) = t` (the degree-1 projector kernel).
    Linear,
    /// `h(t) = e^t`: generic, all level coefficients strictly positive.
    Exponential,
    /// Finite-`d` random-features kernel of an activation.
    RfD(Activation),
    /// Finite-`d` neural-tangent kernel of an activation.
    NtD(Activation),
}

enum Profile {
    Closed(fn(f64) -> f64),
    /// Chebyshev cache in the bulk plus exact endpoint evaluations.
    Cached { interp: ChebInterp, kernels: SphereKernels, act: Activation, nt: bool },
}

/// An inner-product kernel with its level decomposition.
pub struct KernelSpec {
    pub d: usize,
    pub shape: KernelShape,
    pub levels: LevelCoeffs,
    pub geg: Gegenbauer,
    profile: Profile,
    h_one: f64,
}

/// Interpolation cut: |t| above this uses direct quadrature, below uses the
/// Chebyshev cache.
const CHEB_CUT: f64 = 0.995;

impl KernelSpec {
    pub fn new(d: usize, shape: KernelShape, k_max: usize) -> Result<Self> {
        let profile = match &shape {
            KernelShape::Linear => Profile::Closed(|t| t),
            KernelShape::Exponential => Profile::Closed(f64::exp),
            KernelShape::RfD(act) => {
                let splits: Vec<f64> = act.kinks();
                let kernels = SphereKernels::new(d, &splits)?;
                let a = act.clone();
                let interp =
                    ChebInterp::fit(-CHEB_CUT, CHEB_CUT, 128, |t| kernels.h_rf_d(&a, t));
                Profile::Cached { interp, kernels, act: act.clone(), nt: false }
            }
            KernelShape::NtD(act) => {
                let splits: Vec<f64> = act.deriv_kinks();
                let kernels = SphereKernels::new(d, &splits)?;
                let a = act.clone();
                let interp =
                    ChebInterp::fit(-CHEB_CUT, CHEB_CUT, 128, |t| kernels.h_nt_d(&a, t));
                Profile::Cached { interp, kernels, act: act.clone(), nt: true }
            }
        };
        let h_one = match &profile {
            Profile::Closed(f) => f(1.0),
            Profile::Cached { kernels, act, nt, .. } => {
                if *nt {
                    kernels.h_nt_d(act, 1.0)
                } else {
                    kernels.h_rf_d(act, 1.0)
                }
            }
        };
        let geg = Gegenbauer::new(d, k_max)?;
        let spec_tmp = |t: f64| match &profile {
            Profile::Closed(f) => f(t),
            Profile::Cached { interp, kernels, act, nt } => {
                if t.abs() <= CHEB_CUT {
                    interp.eval(t)
                } else if *nt {
                    kernels.h_nt_d(act, t.clamp(-1.0, 1.0))
                } else {
                    kernels.h_rf_d(act, t.clamp(-1.0, 1.0))
                }
            }
        };
        let kinks_t: Vec<f64> = vec![];
        let levels = kernel_level_coeffs(spec_tmp, d, k_max, &kinks_t)?;
        Ok(KernelSpec { d, shape, levels, geg, profile, h_one })
    }

    /// `h(t)`.
    pub fn h(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Closed(f) => f(t),
            Profile::Cached { interp, kernels, act, nt } => {
                if t.abs() <= CHEB_CUT {
                    interp.eval(t)
                } else if *nt {
                    kernels.h_nt_d(act, t.clamp(-1.0, 1.0))
                } else {
                    kernels.h_rf_d(act, t.clamp(-1.0, 1.0))
                }
            }
        }
    }

    /// `h(1)`, the diagonal value `K(x,x)`.
    pub fn h_one(&self) -> f64 {
        self.h_one
    }

    /// Self-induced regularization `γ(ℓ) = Σ_{k>ℓ} ξ² B(d,k)`, computed
    /// exactly as `h(1)` minus the retained low-level mass.
    pub fn gamma_of_ell(&self, ell: usize) -> f64 {
        let low: f64 = self
            .levels
            .xi_sq
            .iter()
            .zip(&self.levels.b_dk)
            .take(ell + 1)
            .map(|(x, b)| x * b)
            .sum();
        (self.h_one - low).max(0.0)
    }

    /// Kernel matrix `K_ij = h(⟨x_i,x_j⟩/d)` for rows on the sphere.
    pub fn kernel_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_sphere_rows(x, self.d)?;
        let n = x.nrows();
        let gram = x * x.transpose();
        let df = self.d as f64;
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.h_one;
            for j in 0..i {
                let t = gram[(i, j)] / df;
                if t.abs() > 1.0 + 1e-6 {
                    return Err(Error::invalid(format!(
                        "inner product {t} outside [−1,1] beyond tolerance"
                    )));
                }
                let v = self.h(t.clamp(-1.0, 1.0));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Cross-kernel matrix `K(x_test_i, x_j)`.
    pub fn cross_matrix(&self, x_test: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_sphere_rows(x_test, self.d)?;
        let df = self.d as f64;
        let gram = x_test * x.transpose();
        Ok(DMatrix::from_fn(x_test.nrows(), x.nrows(), |i, j| {
            self.h((gram[(i, j)] / df).clamp(-1.0, 1.0))
        }))
    }
}

fn check_sphere_rows(x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::dim(format!("points have dimension {}, kernel has d = {d}", x.ncols())));
    }
    let want = (d as f64).sqrt();
    for i in 0..x.nrows() {
        let norm = x.row(i).norm();
        if (norm - want).abs() > 1e-8 * want {
            return Err(Error::invalid(format!(
                "row {i} has norm {norm}, expected √d = {want} (normalize to the sphere)"
            )));
        }
    }
    Ok(())
}

/// Fitted KRR coefficients.
pub struct KrrFit {
    pub alpha: DVector<f64>,
    pub train_residual_norm: f64,
    /// Smallest kernel eigenvalue, reported for `λ = 0` solves.
    pub min_eig: Option<f64>,
}

/// Solves `(λI + K_n) α = y`; `λ = 0` is a spectral pseudo-solve, reported
/// as singular when interpolation fails.
pub fn krr_fit(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<KrrFit> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!("negative lambda: {lambda}")));
    }
    let n = k.nrows();
    if lambda > 0.0 {
        let a = k.clone() + DMatrix::identity(n, n) * lambda;
        let alpha = spd_solve(&a, y)?;
        let resid = (k * &alpha - y).norm();
        return Ok(KrrFit { alpha, train_residual_norm: resid, min_eig: None });
    }
    let (vals, vecs) = sym_eigen(k);
    let lmax = vals.last().copied().unwrap_or(0.0);
    let cutoff = 1e-12 * lmax.max(0.0);
    let mut alpha = DVector::zeros(n);
    for (i, &v) in vals.iter().enumerate() {
        if v > cutoff {
            let u = vecs.column(i);
            alpha += u * (u.dot(y) / v);
        }
    }
    let resid = (k * &alpha - y).norm();
    if resid > 1e-6 * y.norm().max(1e-300) {
        return Err(Error::Singular(format!(
            "ridgeless kernel solve failed to interpolate: residual {resid:.3e}, smallest eigenvalue {:.3e}",
            vals.first().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(KrrFit { alpha, train_residual_norm: resid, min_eig: vals.first().copied() })
}

/// Fits on `(x, y)` and predicts at `x_test`.
pub fn krr_fit_predict(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    x_test: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let k = spec.kernel_matrix(x)?;
    let fit = krr_fit(&k, y, lambda)?;
    let kx = spec.cross_matrix(x_test, x)?;
    Ok(kx * fit.alpha)
}

/// Draws a regression task: `n` covariates uniform on `S^{d-1}(√d)` and
/// noisy responses from the target.
pub fn sample_task<R: Rng>(
    target: &TargetFunction,
    n: usize,
    tau: f64,
    rng: &mut R,
) -> (DMatrix<f64>, DVector<f64>) {
    let d = target.d();
    let radius = (d as f64).sqrt();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = sample_sphere(d, radius, rng);
        x.row_mut(i).copy_from(&row.transpose());
    }
    let mut y = target.eval_rows(&x);
    for i in 0..n {
        y[i] += tau * rng.sample::<f64, _>(StandardNormal);
    }
    (x, y)
}

/// Monte Carlo estimate of the KRR excess risk.
#[derive(Debug, Clone)]
pub struct RiskMc {
    pub risk: MeanSem,
    pub train_err: MeanSem,
}

pub fn krr_risk_mc(
    spec: &KernelSpec,
    target: &TargetFunction,
    n: usize,
    lambda: f64,
    tau: f64,
    n_test: usize,
    reps: usize,
    seed: u64,
) -> Result<RiskMc> {
    let per: Vec<Result<(f64, f64)>> = run_replicas(seed, reps, |_, mut rng| {
        let (x, y) = sample_task(target, n, tau, &mut rng);
        let k = spec.kernel_matrix(&x)?;
        let fit = krr_fit(&k, &y, lambda)?;
        let train_err = (&k * &fit.alpha - &y).norm_squared() / n as f64;
        let (xt, _) = sample_task(target, n_test, 0.0, &mut rng);
        let kx = spec.cross_matrix(&xt, &x)?;
        let pred = kx * &fit.alpha;
        let truth = target.eval_rows(&xt);
        let risk = (pred - truth).norm_squared() / n_test as f64;
        Ok((risk, train_err))
    });
    let mut risks = Vec::with_capacity(reps);
    let mut train = Vec::with_capacity(reps);
    for r in per {
        let (a, b) = r?;
        risks.push(a);
        train.push(b);
    }
    Ok(RiskMc { risk: MeanSem::from_samples(&risks), train_err: MeanSem::from_samples(&train) })
}

/// Sample-size regime relative to the resolvable polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// `d^{ℓ+δ} ≤ n ≤ d^{ℓ+1−δ}`: risk plateaus at `‖P_{>ℓ}f*‖²`.
    InBand { ell: usize },
    /// `n` close to an integer power of `d`: prediction unreliable.
    NearThreshold { ell: usize },
}

/// Staircase risk prediction of ridgeless KRR.
#[derive(Debug, Clone, Serialize)]
pub struct StaircasePrediction {
    pub regime: Regime,
    /// `‖P_{>ℓ}f*‖²` at the resolvable degree `ℓ = ⌊log_d n⌋`.
    pub predicted_risk: f64,
    pub ell: usize,
    /// Self-induced regularization at that level; predictions are asserted
    /// insensitive only for `λ ∈ [0, γ]`.
    pub gamma_ell: f64,
}

pub fn staircase_prediction(
    spec: &KernelSpec,
    target: &TargetFunction,
    n: usize,
    delta: f64,
) -> Result<StaircasePrediction> {
    if target.d() != spec.d {
        return Err(Error::dim("target and kernel dimension differ"));
    }
    let d = spec.d as f64;
    let kappa = (n as f64).ln() / d.ln();
    let ell = kappa.floor() as usize;
    let frac = kappa - ell as f64;
    let regime = if frac >= delta && frac <= 1.0 - delta {
        Regime::InBand { ell }
    } else {
        Regime::NearThreshold { ell: kappa.round() as usize }
    };
    let (_, above) = target.projection_masses(ell);
    Ok(StaircasePrediction { regime, predicted_risk: above, ell, gamma_ell: spec.gamma_of_ell(ell) })
}

/// Low/high-frequency kernel split diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelSplit {
    /// `σ_min(K^{≤ℓ})`: grows like `n ξ_{d,ℓ}² ≍ n d^{-ℓ}` in band.
    pub sigma_min_low: f64,
    /// `‖K^{>ℓ} − γI‖_op`: small when the high-frequency part concentrates.
    pub opnorm_high_dev: f64,
    pub gamma: f64,
}

pub fn kernel_split_diagnostics(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    ell: usize,
) -> Result<KernelSplit> {
    if ell + 1 > spec.levels.xi_sq.len() {
        return Err(Error::invalid(format!(
            "split at ℓ = {ell} needs level coefficients to k ≥ ℓ, have {}",
            spec.levels.xi_sq.len() - 1
        )));
    }
    let k_full = spec.kernel_matrix(x)?;
    let n = x.nrows();
    let gram = x * x.transpose();
    let mut k_low = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let t = gram[(i, j)];
            let mut v = 0.0;
            for k in 0..=ell {
                v += spec.levels.xi_sq[k] * spec.levels.b_dk[k] * spec.geg.eval(k, t);
            }
            k_low[(i, j)] = v;
            k_low[(j, i)] = v;
        }
    }
    let gamma = spec.gamma_of_ell(ell);
    let sigma_min_low = sym_eigenvalues(&k_low)[0];
    let mut dev = k_full - &k_low;
    for i in 0..n {
        dev[(i, i)] -= gamma;
    }
    Ok(KernelSplit { sigma_min_low, opnorm_high_dev: opnorm_sym(&dev), gamma })
}

/// Kernel matrix for an arbitrary profile (test oracles, empirical feature
/// kernels).
pub fn kernel_matrix_with<H: Fn(f64) -> f64>(h: H, d: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = x * x.transpose();
    let df = d as f64;
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| h(gram[(i, j)] / df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::replica_rng;
    use approx::assert_relative_eq;

    fn sphere_points(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = replica_rng(seed, 0);
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            let row = sample_sphere(d, (d as f64).sqrt(), &mut rng);
            x.row_mut(i).copy_from(&row.transpose());
        }
        x
    }

    #[test]
    fn kernel_matrix_basics() {
        let d = 10usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 6).unwrap();
        // Single point: [[h(1)]].
        let x = sphere_points(d, 1, 3);
        let k = spec.kernel_matrix(&x).unwrap();
        assert_relative_eq!(k[(0, 0)], 1.0_f64.exp(), epsilon = 1e-12);
        // Antipodal pair: off-diagonal h(−1).
        let mut x2 = DMatrix::zeros(2, d);
        x2.row_mut(0).copy_from(&x.row(0));
        x2.row_mut(1).copy_from(&(-x.row(0)));
        let k2 = spec.kernel_matrix(&x2).unwrap();
        assert_relative_eq!(k2[(0, 1)], (-1.0_f64).exp(), epsilon = 1e-12);
        // Entrywise brute force.
        let x3 = sphere_points(d, 5, 4);
        let k3 = spec.kernel_matrix(&x3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let t = x3.row(i).dot(&x3.row(j)) / d as f64;
                assert_relative_eq!(k3[(i, j)], t.exp(), epsilon = 1e-10);
            }
        }
        // Unnormalized rows are rejected.
        let bad = DMatrix::from_row_slice(1, d, &[1.0; 10]);
        assert!(spec.kernel_matrix(&(bad * 2.0)).is_err());
    }

    #[test]
    fn one_point_prediction_formula() {
        // n = 1: f̂(x) = h(⟨x,x₁⟩/d)·y₁/(λ + h(1)).
        let d = 8usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 5).unwrap();
        let x = sphere_points(d, 1, 9);
        let y = DVector::from_vec(vec![2.0]);
        let xt = sphere_points(d, 3, 10);
        let lambda = 0.7;
        let pred = krr_fit_predict(&spec, &x, &y, lambda, &xt).unwrap();
        for i in 0..3 {
            let t = xt.row(i).dot(&x.row(0)) / d as f64;
            let want = t.exp() * 2.0 / (lambda + 1.0_f64.exp());
            assert_relative_eq!(pred[i], want, epsilon = 1e-10);
        }
    }

    #[test]
    fn huge_lambda_shrinks_predictions() {
        let d = 8usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 5).unwrap();
        let x = sphere_points(d, 12, 1);
        let y = DVector::from_element(12, 1.0);
        let pred = krr_fit_predict(&spec, &x, &y, 1e12, &x).unwrap();
        assert!(pred.norm() < 1e-9);
    }

    #[test]
    fn ridgeless_interpolates() {
        let d = 10usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 6).unwrap();
        let x = sphere_points(d, 30, 2);
        let mut rng = replica_rng(6, 0);
        let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let k = spec.kernel_matrix(&x).unwrap();
        let fit = krr_fit(&k, &y, 0.0).unwrap();
        assert!(fit.train_residual_norm <= 1e-8 * y.norm());
        assert!(fit.min_eig.unwrap() > 0.0);
    }

    #[test]
    fn zero_target_zero_risk() {
        let d = 6usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 5).unwrap();
        let target = TargetFunction::linear(vec![0.0; d]);
        let mc = krr_risk_mc(&spec, &target, 20, 0.1, 0.0, 200, 3, 11).unwrap();
        assert!(mc.risk.mean < 1e-20);
    }

    #[test]
    fn gamma_of_ell_is_monotone_tail() {
        let spec = KernelSpec::new(12, KernelShape::Exponential, 8).unwrap();
        let mut prev = f64::INFINITY;
        for ell in 0..=8 {
            let g = spec.gamma_of_ell(ell);
            assert!(g <= prev + 1e-15);
            assert!(g >= 0.0);
            prev = g;
        }
        // For exp kernel: γ(ℓ) ≈ Σ_{k>ℓ} 1/k! in the large-d limit; at d=12
        // it is within a factor-ish — just check γ(0) < h(1).
        assert!(spec.gamma_of_ell(0) < spec.h_one());
    }

    #[test]
    fn linear_kernel_split_is_degenerate() {
        // h(t) = t, ℓ = 1: K^{>1} = 0 and γ = 0.
        let d = 10usize;
        let spec = KernelSpec::new(d, KernelShape::Linear, 4).unwrap();
        let x = sphere_points(d, 15, 8);
        let split = kernel_split_diagnostics(&spec, &x, 1).unwrap();
        assert!(split.gamma.abs() < 1e-9);
        assert!(split.opnorm_high_dev < 1e-8);
    }

    #[test]
    fn staircase_regimes() {
        let d = 25usize;
        let spec = KernelSpec::new(d, KernelShape::Exponential, 8).unwrap();
        let target = TargetFunction::linear({
            let mut b = vec![0.0; d];
            b[0] = 1.0;
            b
        });
        // Linear target, n = d^{1.5}: prediction 0 in band ℓ = 1.
        let n = (25.0_f64.powf(1.5)) as usize;
        let p = staircase_prediction(&spec, &target, n, 0.1).unwrap();
        assert_eq!(p.regime, Regime::InBand { ell: 1 });
        assert!(p.predicted_risk.abs() < 1e-12);
        // n < d^{0.9}: ℓ = 0, prediction Var(f*) = ‖f*‖².
        let p = staircase_prediction(&spec, &target, 12, 0.1).unwrap();
        assert_eq!(p.ell, 0);
        assert_relative_eq!(p.predicted_risk, 1.0, epsilon = 1e-12);
        // n = d: near-threshold.
        let p = staircase_prediction(&spec, &target, 25, 0.1).unwrap();
        assert!(matches!(p.regime, Regime::NearThreshold { ell: 1 }));
    }

    #[test]
    fn dual_representation_matches_feature_ridge() {
        // Empirical RF kernel with frozen W: KRR in kernel form equals
        // feature-space ridge predictions.
        let d = 8usize;
        let n = 12usize;
        let n_feat = 20usize;
        let mut rng = replica_rng(33, 0);
        let x = sphere_points(d, n, 14);
        let xt = sphere_points(d, 6, 15);
        let w = DMatrix::from_fn(n_feat, d, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let act = Activation::Tanh { scale: 1.0 };
        let feats = |pts: &DMatrix<f64>| -> DMatrix<f64> {
            let z = pts * w.transpose();
            DMatrix::from_fn(pts.nrows(), n_feat, |i, j| {
                act.eval(z[(i, j)]) / (n_feat as f64).sqrt()
            })
        };
        let phi = feats(&x);
        let phi_t = feats(&xt);
        let y = DVector::from_fn(n, |i, _| (i as f64 * 0.3).sin());
        let lambda = 0.05;
        // Kernel route.
        let k = &phi * phi.transpose();
        let alpha = (k.clone() + DMatrix::identity(n, n) * lambda)
            .try_inverse()
            .unwrap()
            * &y;
        let pred_kernel = &phi_t * (phi.transpose() * &alpha);
        // Feature route: b = (λI + ΦᵀΦ)⁻¹Φᵀy.
        let a = phi.transpose() * &phi + DMatrix::identity(n_feat, n_feat) * lambda;
        let b = a.try_inverse().unwrap() * (phi.transpose() * &y);
        let pred_feat = &phi_t * b;
        assert!((pred_kernel - pred_feat).norm() < 1e-8);
    }
}
