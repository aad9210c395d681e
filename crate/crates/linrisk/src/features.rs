//! Finite-width random-feature (RF) and neural-tangent (NT) models.
//!
//! Featurizations for first-layer weights `w_i` uniform on the unit sphere
//! and data on the sphere of radius `√d`:
//!
//! ```text
//! φ_RF(x) = σ(⟨w_i,x⟩)/√N ∈ R^N ,     φ_NT(x) = σ′(⟨w_i,x⟩)xᵀ/√(Nd) ∈ R^{Nd} ,
//! ```
//!
//! with ridge fits `argmin ‖y − Φb‖² + λ‖b‖²` solved on the cheaper
//! primal/dual side (the two routes agree by the resolvent identity
//! `(λI_p + ΦᵀΦ)⁻¹Φᵀ = Φᵀ(λI_n + ΦΦᵀ)⁻¹`). The combined RF+NT model uses
//! the step-size weighted objective `‖y − Φb‖²/n + λ‖b₁‖² + (λ/s)‖b₂‖²`.
//!
//! The empirical NT kernel and its infinite-width expectation are
//!
//! ```text
//! (K_N)_ij = (1/Nd) Σ_k σ′(⟨w_k,x_i⟩) σ′(⟨w_k,x_j⟩) ⟨x_i,x_j⟩ ,
//! (K)_ij   = (⟨x_i,x_j⟩/d) · E_w[σ′(⟨w,x_i⟩) σ′(⟨w,x_j⟩)] ,
//! ```
//!
//! and the concentration diagnostic is `‖K^{-1/2} K_N K^{-1/2} − I‖_op`,
//! which decays like `√(n/(Nd))` up to log factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funspace::sphere::sample_sphere;
use crate::funspace::{Activation, TargetFunction};
use crate::krr::{sample_task, KernelShape, KernelSpec, Regime, RiskMc};
use crate::linalg::{inv_sqrt_pd, opnorm_sym, spd_solve, sym_eigen};
use crate::mc::{run_replicas, MeanSem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Rf,
    Nt,
    /// Horizontal concatenation `[Φ_RF | Φ_NT]`.
    Combined,
}

/// Frozen first-layer weights plus activation.
#[derive(Debug, Clone)]
pub struct FeatureEnsemble {
    /// `N × d`, rows on the unit sphere.
    pub w: DMatrix<f64>,
    pub activation: Activation,
    pub kind: FeatureKind,
}

impl FeatureEnsemble {
    pub fn sample<R: Rng>(
        n_features: usize,
        d: usize,
        activation: Activation,
        kind: FeatureKind,
        rng: &mut R,
    ) -> Self {
        let mut w = DMatrix::zeros(n_features, d);
        for i in 0..n_features {
            let row = sample_sphere(d, 1.0, rng);
            w.row_mut(i).copy_from(&row.transpose());
        }
        FeatureEnsemble { w, activation, kind }
    }

    pub fn n_neurons(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    /// Number of trainable parameters of the featurization.
    pub fn param_count(&self) -> usize {
        let (n, d) = (self.n_neurons(), self.d());
        match self.kind {
            FeatureKind::Rf => n,
            FeatureKind::Nt => n * d,
            FeatureKind::Combined => n + n * d,
        }
    }

    /// Design matrix `Φ` for rows of `x` (normalized to `√d`).
    pub fn build_features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.d();
        if x.ncols() != d {
            return Err(Error::dim(format!(
                "points have dimension {}, weights have d = {d}",
                x.ncols()
            )));
        }
        let n = x.nrows();
        let nf = self.n_neurons();
        let z = x * self.w.transpose(); // n × N preactivations
        let rf_scale = 1.0 / (nf as f64).sqrt();
        let nt_scale = 1.0 / ((nf * d) as f64).sqrt();
        let build_rf = || {
            DMatrix::from_fn(n, nf, |i, j| self.activation.eval(z[(i, j)]) * rf_scale)
        };
        let build_nt = || {
            let mut phi = DMatrix::zeros(n, nf * d);
            for i in 0..n {
                for k in 0..nf {
                    let s = self.activation.deriv(z[(i, k)]) * nt_scale;
                    for j in 0..d {
                        phi[(i, k * d + j)] = s * x[(i, j)];
                    }
                }
            }
            phi
        };
        Ok(match self.kind {
            FeatureKind::Rf => build_rf(),
            FeatureKind::Nt => build_nt(),
            FeatureKind::Combined => {
                let rf = build_rf();
                let nt = build_nt();
                let mut phi = DMatrix::zeros(n, nf + nf * d);
                phi.view_mut((0, 0), (n, nf)).copy_from(&rf);
                phi.view_mut((0, nf), (n, nf * d)).copy_from(&nt);
                phi
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveRoute {
    Primal,
    Dual,
}

/// Fitted second-layer (or linearized) coefficients.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coeffs: DVector<f64>,
    pub lambda: f64,
    pub train_residual_norm: f64,
    pub route: SolveRoute,
}

/// Ridge fit `argmin ‖y − Φb‖² + λ‖b‖²`, route chosen by `min(n, p)`;
/// `λ = 0` is the minimum-norm interpolator via dual pseudo-solve when
/// `p > n` and plain least squares otherwise.
pub fn ridge_fit_features(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FitResult> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!("negative lambda: {lambda}")));
    }
    let n = phi.nrows();
    let p = phi.ncols();
    if y.len() != n {
        return Err(Error::dim(format!("y has length {}, Φ has {n} rows", y.len())));
    }
    let (coeffs, route) = if p <= n {
        let mut a = phi.transpose() * phi;
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let b = phi.transpose() * y;
        let coeffs = if lambda > 0.0 {
            spd_solve(&a, &b)?
        } else {
            // Spectral pseudo-solve; report rank deficiency.
            let (vals, vecs) = sym_eigen(&a);
            let lmax = vals.last().copied().unwrap_or(0.0);
            if vals.first().copied().unwrap_or(0.0) <= 1e-12 * lmax {
                return Err(Error::Singular(format!(
                    "λ = 0 with p ≤ n and rank-deficient Φ: smallest Gram eigenvalue {:.3e}",
                    vals.first().copied().unwrap_or(f64::NAN)
                )));
            }
            let mut out = DVector::zeros(p);
            for (i, &v) in vals.iter().enumerate() {
                let u = vecs.column(i);
                out += u * (u.dot(&b) / v);
            }
            out
        };
        (coeffs, SolveRoute::Primal)
    } else {
        let g = phi * phi.transpose();
        let coeffs = if lambda > 0.0 {
            let mut a = g;
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            phi.transpose() * spd_solve(&a, y)?
        } else {
            phi.transpose() * crate::linalg::psd_pseudo_solve(&g, y, 1e-12)
        };
        (coeffs, SolveRoute::Dual)
    };
    let resid = (phi * &coeffs - y).norm();
    Ok(FitResult { coeffs, lambda, train_residual_norm: resid, route })
}

/// Combined RF+NT fit with the step-size scaling: minimizes
/// `‖y − Φb‖²/n + λ‖b₁‖² + (λ/s)‖b₂‖²` (`λ_RF = λ`, `λ_NT = λ/s`).
pub fn combined_linearized_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ensemble: &FeatureEnsemble,
    lambda: f64,
    s: f64,
) -> Result<FitResult> {
    if ensemble.kind != FeatureKind::Combined {
        return Err(Error::invalid("combined_linearized_fit needs a Combined ensemble"));
    }
    if !(s > 0.0) {
        return Err(Error::invalid(format!("step-size ratio s must be positive, got {s}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("combined fit requires λ > 0 (λ_NT = λ/s must be finite)"));
    }
    let phi = ensemble.build_features(x)?;
    let n = phi.nrows() as f64;
    let nf = ensemble.n_neurons();
    let p = phi.ncols();
    // Dual solve with block-weighted penalty: b = Λ⁻¹Φᵀ(ΦΛ⁻¹Φᵀ/n + I)⁻¹ y/n.
    let inv_pen =
        DVector::from_fn(p, |j, _| if j < nf { 1.0 / lambda } else { s / lambda });
    let phi_w = {
        let mut m = phi.clone();
        for j in 0..p {
            let c = inv_pen[j];
            m.column_mut(j).scale_mut(c);
        }
        m
    };
    let mut g = (&phi_w * phi.transpose()) / n;
    let rows = g.nrows();
    for i in 0..rows {
        g[(i, i)] += 1.0;
    }
    let alpha = spd_solve(&g.transpose(), y)?; // G is symmetric up to fp; symmetrize via transpose product
    let coeffs = phi_w.transpose() * alpha / n;
    let resid = (&phi * &coeffs - y).norm();
    Ok(FitResult { coeffs, lambda, train_residual_norm: resid, route: SolveRoute::Dual })
}

/// Splits combined coefficients into the RF and NT blocks.
pub fn split_blocks<'a>(ensemble: &FeatureEnsemble, coeffs: &'a DVector<f64>) -> (nalgebra::DVectorView<'a, f64>, nalgebra::DVectorView<'a, f64>) {
    let nf = ensemble.n_neurons();
    (coeffs.rows(0, nf), coeffs.rows(nf, coeffs.len() - nf))
}

/// Empirical NT kernel `K_N = (XXᵀ ⊙ SSᵀ)/(Nd)` with `S = σ′(XWᵀ)`.
pub fn nt_empirical_kernel(ensemble: &FeatureEnsemble, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = ensemble.d();
    if x.ncols() != d {
        return Err(Error::dim("dimension mismatch in nt_empirical_kernel"));
    }
    let z = x * ensemble.w.transpose();
    let s = z.map(|v| ensemble.activation.deriv(v));
    let gram = x * x.transpose();
    let ss = &s * s.transpose();
    let scale = 1.0 / (ensemble.n_neurons() * d) as f64;
    Ok(DMatrix::from_fn(x.nrows(), x.nrows(), |i, j| gram[(i, j)] * ss[(i, j)] * scale))
}

/// Empirical and infinite-width NT kernel matrices; `nt_spec` must be a
/// [`KernelShape::NtD`] kernel of the same activation and dimension.
pub fn nt_kernels(
    ensemble: &FeatureEnsemble,
    x: &DMatrix<f64>,
    nt_spec: &KernelSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if nt_spec.d != ensemble.d() {
        return Err(Error::dim("kernel spec dimension differs from ensemble"));
    }
    if !matches!(&nt_spec.shape, KernelShape::NtD(a) if *a == ensemble.activation) {
        return Err(Error::invalid("nt_kernels needs an NtD kernel spec of the same activation"));
    }
    let k_n = nt_empirical_kernel(ensemble, x)?;
    let k_inf = nt_spec.kernel_matrix(x)?;
    Ok((k_n, k_inf))
}

/// `‖K^{-1/2} K_N K^{-1/2} − I‖_op`. Fails with the γ-event report when
/// `K` is not positive definite at relative floor `1e-12`.
pub fn concentration_diagnostic(k_n: &DMatrix<f64>, k_inf: &DMatrix<f64>) -> Result<f64> {
    let w = inv_sqrt_pd(k_inf, 1e-12).map_err(|e| {
        Error::Singular(format!("infinite-width kernel fails the K ⪰ γI event: {e}"))
    })?;
    let mut m = &w * k_n * &w;
    for i in 0..m.nrows() {
        m[(i, i)] -= 1.0;
    }
    Ok(opnorm_sym(&m))
}

/// Monte Carlo excess risk of the RF or NT ridge fit (fresh `W` and data per
/// replica).
#[allow(clippy::too_many_arguments)]
pub fn feature_risk_mc(
    target: &TargetFunction,
    activation: &Activation,
    kind: FeatureKind,
    n: usize,
    n_neurons: usize,
    lambda: f64,
    tau: f64,
    n_test: usize,
    reps: usize,
    seed: u64,
) -> Result<RiskMc> {
    let per: Vec<Result<(f64, f64)>> = run_replicas(seed, reps, |_, mut rng| {
        let ensemble =
            FeatureEnsemble::sample(n_neurons, target.d(), activation.clone(), kind, &mut rng);
        let (x, y) = sample_task(target, n, tau, &mut rng);
        let phi = ensemble.build_features(&x)?;
        let fit = ridge_fit_features(&phi, &y, lambda)?;
        let train_err = fit.train_residual_norm * fit.train_residual_norm / n as f64;
        let (xt, _) = sample_task(target, n_test, 0.0, &mut rng);
        let phi_t = ensemble.build_features(&xt)?;
        let pred = phi_t * &fit.coeffs;
        let truth = target.eval_rows(&xt);
        Ok(((pred - truth).norm_squared() / n_test as f64, train_err))
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

pub fn rf_risk_mc(
    target: &TargetFunction,
    activation: &Activation,
    n: usize,
    n_neurons: usize,
    lambda: f64,
    tau: f64,
    n_test: usize,
    reps: usize,
    seed: u64,
) -> Result<RiskMc> {
    feature_risk_mc(target, activation, FeatureKind::Rf, n, n_neurons, lambda, tau, n_test, reps, seed)
}

pub fn nt_risk_mc(
    target: &TargetFunction,
    activation: &Activation,
    n: usize,
    n_neurons: usize,
    lambda: f64,
    tau: f64,
    n_test: usize,
    reps: usize,
    seed: u64,
) -> Result<RiskMc> {
    feature_risk_mc(target, activation, FeatureKind::Nt, n, n_neurons, lambda, tau, n_test, reps, seed)
}

/// RF staircase: samples and neurons play symmetric roles,
/// `ℓ = min(ℓ₁, ℓ₂)`.
#[derive(Debug, Clone, Serialize)]
pub struct RfStaircase {
    pub ell: usize,
    pub predicted_risk: f64,
    pub sample_regime: Regime,
    pub neuron_regime: Regime,
    /// Separation `max(N/n, n/N) ≥ d^δ` held.
    pub separated: bool,
    /// Approximation-limited (`N ≪ n`) or statistically limited (`n ≪ N`).
    pub limiting: RfLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RfLimit {
    Approximation,
    Statistical,
    NearInterpolationThreshold,
}

pub fn rf_staircase_prediction(
    target: &TargetFunction,
    n: usize,
    n_neurons: usize,
    delta: f64,
) -> Result<RfStaircase> {
    let d = target.d() as f64;
    let band = |m: usize| -> Regime {
        let kappa = (m as f64).ln() / d.ln();
        let ell = kappa.floor() as usize;
        let frac = kappa - ell as f64;
        if frac >= delta && frac <= 1.0 - delta {
            Regime::InBand { ell }
        } else {
            Regime::NearThreshold { ell: kappa.round() as usize }
        }
    };
    let sample_regime = band(n);
    let neuron_regime = band(n_neurons);
    let ratio = (n_neurons as f64 / n as f64).max(n as f64 / n_neurons as f64);
    let separated = ratio >= d.powf(delta);
    let ell1 = match sample_regime {
        Regime::InBand { ell } | Regime::NearThreshold { ell } => ell,
    };
    let ell2 = match neuron_regime {
        Regime::InBand { ell } | Regime::NearThreshold { ell } => ell,
    };
    let ell = ell1.min(ell2);
    let (_, above) = target.projection_masses(ell);
    let limiting = if !separated {
        RfLimit::NearInterpolationThreshold
    } else if n_neurons < n {
        RfLimit::Approximation
    } else {
        RfLimit::Statistical
    };
    Ok(RfStaircase { ell, predicted_risk: above, sample_regime, neuron_regime, separated, limiting })
}
