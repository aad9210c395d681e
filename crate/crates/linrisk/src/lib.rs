//! Numerical library for the sharp high-dimensional risk theory of linearized
//! neural networks.
//!
//! The crate is organized around the objects that drive the theory:
//!
//! - [`spectrum`]: covariance spectra `Σ = diag(σ_1 ≥ σ_2 ≥ …)` together with
//!   target coefficients `⟨β*, v_k⟩`, explicit or parametric (power-law and
//!   log-power tails).
//! - [`design`]: the Gaussian / sub-Gaussian feature model `y = Zβ* + w`,
//!   ridge regression, and exact empirical bias/variance splits.
//! - [`det_equiv`]: deterministic equivalents — the effective regularization
//!   fixed point `λ*`, predicted bias `𝓑` and variance `𝓥`, the sequence-model
//!   noise `ω²`, effective ranks, and benign-overfitting bounds.
//! - [`latent`]: the latent space model, its ridgeless closed-form risk, and
//!   its finite-dimensional Monte Carlo counterpart.
//! - [`funspace`]: Hermite and Gegenbauer machinery on the Gaussian line and
//!   the sphere — quadratures, spherical harmonic dimensions `B(d,k)`,
//!   activation functionals, target functions, and projection masses.
//! - [`krr`]: kernel ridge regression with inner-product kernels on the
//!   sphere of radius `√d`, staircase risk predictions, and the
//!   low/high-frequency kernel split diagnostics.
//! - [`features`]: finite-width random-feature and neural-tangent models,
//!   primal/dual ridge solvers, empirical vs expected NT kernels, and kernel
//!   concentration diagnostics.
//! - [`meanfield`]: non-lazy training — potentials `V`, `U`, particle
//!   gradient flow, online SGD, the symmetry-reduced `(a, s, r)` dynamics,
//!   and the single-neuron gradient descent experiment.
//! - [`mc`]: seeded replica execution with deterministic aggregation.
//!
//! Everything is pure given `(inputs, seed)`: identical inputs produce
//! bit-identical outputs regardless of thread count.

pub mod design;
pub mod det_equiv;
pub mod error;
pub mod features;
pub mod funspace;
pub mod krr;
pub mod latent;
pub mod linalg;
pub mod mc;
pub mod meanfield;
pub mod spectrum;

pub use error::{Error, Result};
