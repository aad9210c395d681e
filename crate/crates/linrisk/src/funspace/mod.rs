//! Hermite and Gegenbauer machinery: quadratures, spherical-harmonic
//! dimensions, activation functionals, and target-function decompositions.

pub mod activation;
pub mod hermite;
pub mod quad;
pub mod sphere;
pub mod target;

pub use activation::{Activation, ActivationSpec, HermiteBars, SphereKernels};
pub use hermite::{gaussian_norm_sq, hermite_coeffs, hermite_he};
pub use quad::{gauss_legendre, gaussian_expect_kinked, gaussian_pair_expect, ChebInterp, GaussHermite};
pub use sphere::{kernel_level_coeffs, sample_sphere, sphere_dim, Gegenbauer, LevelCoeffs, SphereQuadrature};
pub use target::{residual_mass_bl, HarmonicTerm, TargetFunction};
