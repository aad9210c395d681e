//! Covariance spectra and target coefficients.
//!
//! A [`SpectralModel`] holds the eigenvalues `σ_1 ≥ σ_2 ≥ … > 0` of the
//! population covariance `Σ` (always diagonal in its eigenbasis here) and the
//! coefficients `⟨β*, v_k⟩` of the target vector in that basis. Parametric
//! spectra expand deterministically to explicit lists at a declared
//! truncation, with the truncated tail mass reported so that infinite-`p`
//! behavior stays visible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectrum description: explicit list or parametric with a tail rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpectrumSpec {
    /// Explicit non-increasing positive eigenvalues.
    Explicit(Vec<f64>),
    /// `σ_k = k^{-alpha}`, truncated at `p_trunc`.
    PowerLaw { alpha: f64, p_trunc: usize },
    /// `σ_k = k^{-1} (log(k + e - 1))^{-beta}`, truncated at `p_trunc`.
    ///
    /// The `e - 1` shift pins `σ_1 = 1` and keeps the log positive at `k = 1`.
    LogPower { beta: f64, p_trunc: usize },
}

/// Analytic tail rule attached to a truncated parametric spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailRule {
    PowerLaw { alpha: f64 },
    LogPower { beta: f64 },
}

/// Eigenvalues of `Σ` plus target coefficients in the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    beta_coeffs: Vec<f64>,
    /// Asserts `σ_1 = 1` exactly (operator-norm normalization).
    pub normalized: bool,
    /// Tail rule beyond the truncation, for parametric spectra.
    pub tail: Option<TailRule>,
    /// Upper bound on the truncated tail mass `Σ_{k > p} σ_k`.
    pub tail_mass_bound: f64,
}

impl SpectralModel {
    /// Explicit spectrum with target coefficients.
    pub fn new(eigenvalues: Vec<f64>, beta_coeffs: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::BadSpectrum("zero-length spectrum".into()));
        }
        if eigenvalues.len() != beta_coeffs.len() {
            return Err(Error::dim(format!(
                "spectrum has {} eigenvalues but beta has {} coefficients",
                eigenvalues.len(),
                beta_coeffs.len()
            )));
        }
        for w in eigenvalues.windows(2) {
            if !(w[1] <= w[0]) {
                return Err(Error::BadSpectrum("eigenvalues increase".into()));
            }
        }
        let last = *eigenvalues.last().unwrap();
        if !(last > 0.0) {
            return Err(Error::BadSpectrum(format!("smallest eigenvalue {last} is not > 0")));
        }
        let normalized = eigenvalues[0] == 1.0;
        Ok(SpectralModel { eigenvalues, beta_coeffs, normalized, tail: None, tail_mass_bound: 0.0 })
    }

    /// Expands a parametric or explicit spec with the given target coefficients.
    pub fn from_spec(spec: &SpectrumSpec, beta_coeffs: Vec<f64>) -> Result<Self> {
        match spec {
            SpectrumSpec::Explicit(vals) => Self::new(vals.clone(), beta_coeffs),
            SpectrumSpec::PowerLaw { alpha, p_trunc } => {
                if *p_trunc == 0 {
                    return Err(Error::BadSpectrum("p_trunc = 0".into()));
                }
                let vals: Vec<f64> = (1..=*p_trunc).map(|k| (k as f64).powf(-alpha)).collect();
                let mut m = Self::new(vals, beta_coeffs)?;
                m.tail = Some(TailRule::PowerLaw { alpha: *alpha });
                m.tail_mass_bound = if *alpha > 1.0 {
                    (*p_trunc as f64).powf(1.0 - alpha) / (alpha - 1.0)
                } else {
                    f64::INFINITY
                };
                Ok(m)
            }
            SpectrumSpec::LogPower { beta, p_trunc } => {
                if *p_trunc == 0 {
                    return Err(Error::BadSpectrum("p_trunc = 0".into()));
                }
                let vals: Vec<f64> = (1..=*p_trunc).map(|k| log_power_sigma(k, *beta)).collect();
                let mut m = Self::new(vals, beta_coeffs)?;
                m.tail = Some(TailRule::LogPower { beta: *beta });
                m.tail_mass_bound = if *beta > 1.0 {
                    (*p_trunc as f64).ln().powf(1.0 - beta) / (beta - 1.0)
                } else {
                    f64::INFINITY
                };
                Ok(m)
            }
        }
    }

    /// Isotropic spectrum `Σ = I_p` with zero target.
    pub fn isotropic(p: usize) -> Self {
        Self::new(vec![1.0; p], vec![0.0; p]).unwrap()
    }

    /// Replaces the target coefficients, keeping the spectrum.
    pub fn with_beta(mut self, beta_coeffs: Vec<f64>) -> Result<Self> {
        if beta_coeffs.len() != self.eigenvalues.len() {
            return Err(Error::dim(format!(
                "beta has {} coefficients for spectrum of length {}",
                beta_coeffs.len(),
                self.eigenvalues.len()
            )));
        }
        self.beta_coeffs = beta_coeffs;
        Ok(self)
    }

    /// Unit-norm target spread evenly over all eigendirections.
    pub fn with_flat_unit_beta(self) -> Self {
        let p = self.p();
        let c = 1.0 / (p as f64).sqrt();
        self.with_beta(vec![c; p]).unwrap()
    }

    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta_coeffs
    }

    /// Enforces the `‖Σ‖_op = 1` normalization assumption.
    pub fn assert_normalized(&self) -> Result<()> {
        if self.eigenvalues[0] == 1.0 {
            Ok(())
        } else {
            Err(Error::BadSpectrum(format!(
                "normalization flag requires σ_1 = 1 exactly, got {}",
                self.eigenvalues[0]
            )))
        }
    }

    /// `‖β*‖²`.
    pub fn beta_norm_sq(&self) -> f64 {
        self.beta_coeffs.iter().map(|b| b * b).sum()
    }

    /// `‖β*‖²_Σ = Σ_k σ_k ⟨β*, v_k⟩²`.
    pub fn beta_sigma_norm_sq(&self) -> f64 {
        self.beta_coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(b, s)| s * b * b)
            .sum()
    }

    /// `Tr(Σ)` over the explicit part.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Checks the bounded-varying-spectrum condition
    /// `σ_{⌊δ i⌋} / σ_i ≤ ψ(δ)` for a caller-supplied `ψ`, over the explicit
    /// spectrum and the given `δ` values. Returns the first violation.
    pub fn bounded_varying_check<F>(&self, psi: F, deltas: &[f64]) -> Option<(f64, usize, f64)>
    where
        F: Fn(f64) -> f64,
    {
        for &delta in deltas {
            if !(0.0 < delta && delta <= 1.0) {
                continue;
            }
            let bound = psi(delta);
            for i in 1..=self.p() {
                let j = (delta * i as f64).floor() as usize;
                if j < 1 {
                    continue;
                }
                let ratio = self.eigenvalues[j - 1] / self.eigenvalues[i - 1];
                if ratio > bound {
                    return Some((delta, i, ratio));
                }
            }
        }
        None
    }
}

fn log_power_sigma(k: usize, beta: f64) -> f64 {
    let k = k as f64;
    (1.0 / k) * (k + std::f64::consts::E - 1.0).ln().powf(-beta)
}
