//! Non-lazy training: mean-field potentials, particle gradient flow, online
//! SGD, the symmetry-reduced `(a, s, r)` dynamics, and single-neuron
//! gradient descent.
//!
//! Two-layer network in mean-field scaling, `f̂(x; Θ) = (1/N) Σ a_i σ(⟨w_i,x⟩)`,
//! trained on `y = φ(⟨w*,x⟩) + ε`. With
//!
//! ```text
//! V(θ)       = −E[y·aσ(⟨w,x⟩)] = −a·E[φ(⟨w*,x⟩) σ(⟨w,x⟩)] ,
//! U(θ₁,θ₂)   = a₁a₂·E[σ(⟨w₁,x⟩) σ(⟨w₂,x⟩)] ,
//! ```
//!
//! the gradient flow reads `θ̇_i = −∇V(θ_i) − (1/N) Σ_j ∇U(θ_i, θ_j)` and the
//! population risk is
//!
//! ```text
//! R(ρ̂) = ½E[f*²] + (1/N)Σ_i V(θ_i) + (1/2N²)Σ_{ij} U(θ_i, θ_j) .
//! ```
//!
//! Potentials are evaluated under Gaussian covariates `x ~ N(0, I_d)` (the
//! expectations reduce to bivariate Gaussian quadratures in the pair
//! `(⟨w*,x⟩, ⟨w,x⟩)`); the spherical covariate law is available for risk
//! Monte Carlo and for the single-neuron experiment. Gradients differentiate
//! the quadrature integrand analytically (`σ′` inside); finite differences
//! are a test oracle, not the implementation.
//!
//! The rotation-reduced dynamics tracks `(a, s = ⟨w*,w⟩, ρ)` with a signed
//! transverse coordinate `ρ` (`r = |ρ|`): the flow restricted to any plane
//! containing `w*` is exact in these coordinates, the radial `1/r` term of
//! the reduced PDE manifesting as reflection of `r` at zero. Initialization
//! follows `ρ̄_init = P_A ⊗ N(0, γ²/d) ⊗ Q_{d−1,γ}` with `Q` the law of
//! `γ/√d` times a χ_{d−1} variable.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funspace::quad::{bivariate_expect, GaussHermite};
use crate::funspace::sphere::sample_sphere;
use crate::funspace::Activation;
use crate::mc::MeanSem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateLaw {
    Gaussian,
    Sphere,
}

/// Distribution of second-layer weights at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SecondLayerInit {
    Delta(f64),
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct MeanFieldProblem {
    /// Network activation `σ`.
    pub activation: Activation,
    /// Target link `φ` (the data are `y = φ(⟨w*,x⟩) + ε`).
    pub phi: Activation,
    pub d: usize,
    /// Unit vector.
    pub w_star: DVector<f64>,
    pub covariates: CovariateLaw,
    pub tau: f64,
    pub p_a: SecondLayerInit,
    /// First-layer init scale: `w ~ N(0, γ²I_d/d)`.
    pub gamma: f64,
    /// Gauss–Hermite order for the potential quadratures.
    pub quad_order: usize,
}

impl MeanFieldProblem {
    pub fn new(activation: Activation, phi: Activation, d: usize) -> Self {
        let mut w_star = DVector::zeros(d);
        w_star[0] = 1.0;
        MeanFieldProblem {
            activation,
            phi,
            d,
            w_star,
            covariates: CovariateLaw::Gaussian,
            tau: 0.0,
            p_a: SecondLayerInit::Delta(1.0),
            gamma: 0.1,
            quad_order: 48,
        }
    }

    /// `E[φ(G)²]`: the risk of the zero network is half this.
    pub fn target_norm_sq(&self) -> f64 {
        let gh = GaussHermite::cached(self.quad_order.max(96));
        gh.expect(|x| self.phi.eval(x).powi(2))
    }

    /// The same dynamics seen in the invariant plane: `d = 2`, `w* = e₁`.
    fn embedded_2d(&self) -> MeanFieldProblem {
        let mut p = self.clone();
        p.d = 2;
        p.w_star = DVector::from_vec(vec![1.0, 0.0]);
        p
    }
}

/// `N` particles `θ_i = (a_i, w_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub a: Vec<f64>,
    pub w: Vec<DVector<f64>>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn init<R: Rng>(problem: &MeanFieldProblem, n: usize, rng: &mut R) -> Self {
        let scale = problem.gamma / (problem.d as f64).sqrt();
        let mut a = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(match problem.p_a {
                SecondLayerInit::Delta(v) => v,
                SecondLayerInit::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            });
            w.push(DVector::from_fn(problem.d, |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }));
        }
        ParticleEnsemble { a, w, time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Reduced coordinates `(a, s, r)` of each particle.
    pub fn reduced_coords(&self, w_star: &DVector<f64>) -> Vec<(f64, f64, f64)> {
        self.w
            .iter()
            .zip(&self.a)
            .map(|(w, &a)| {
                let s = w_star.dot(w);
                let r = (w.norm_squared() - s * s).max(0.0).sqrt();
                (a, s, r)
            })
            .collect()
    }

    /// Network output at a point.
    pub fn predict(&self, problem: &MeanFieldProblem, x: &DVector<f64>) -> f64 {
        let n = self.len() as f64;
        self.a
            .iter()
            .zip(&self.w)
            .map(|(&a, w)| a * problem.activation.eval(w.dot(x)))
            .sum::<f64>()
            / n
    }
}

/// `V(θ) = −a E[φ(⟨w*,x⟩) σ(⟨w,x⟩)]` under Gaussian covariates.
pub fn potential_v(problem: &MeanFieldProblem, a: f64, w: &DVector<f64>) -> f64 {
    let s = problem.w_star.dot(w);
    let q = w.norm_squared();
    -a * bivariate_expect(problem.quad_order, 1.0, s, q, |u, v| {
        problem.phi.eval(u) * problem.activation.eval(v)
    })
}

/// `U(θ₁,θ₂) = a₁a₂ E[σ(⟨w₁,x⟩) σ(⟨w₂,x⟩)]` under Gaussian covariates.
pub fn potential_u(
    problem: &MeanFieldProblem,
    a1: f64,
    w1: &DVector<f64>,
    a2: f64,
    w2: &DVector<f64>,
) -> f64 {
    let c = w1.dot(w2);
    a1 * a2
        * bivariate_expect(problem.quad_order, w1.norm_squared(), c, w2.norm_squared(), |u, v| {
            problem.activation.eval(u) * problem.activation.eval(v)
        })
}

/// Gradient of `V` in `(a, w)`.
///
/// `∇_w V = −a E[φ(u) σ′(v) x]` reduces to the span of `(w*, w)`:
/// with `e₁ = w*`, `e₂` the unit complement of `w` and `z = (⟨e₁,x⟩, ⟨e₂,x⟩)`
/// standard normal, the coefficients are `E[φ σ′ z₁]`, `E[φ σ′ z₂]`.
pub fn grad_v(problem: &MeanFieldProblem, a: f64, w: &DVector<f64>) -> (f64, DVector<f64>) {
    let s = problem.w_star.dot(w);
    let e1 = problem.w_star.clone();
    let w_perp = w - &e1 * s;
    let r = w_perp.norm();
    // Fused pass: u = z₁, v = s z₁ + r z₂; collect E[φ(u)σ(v)],
    // E[φ(u)σ′(v)z₁], E[φ(u)σ′(v)z₂] together.
    let gh = GaussHermite::cached(problem.quad_order);
    let mut e_fs = 0.0;
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for (&x1, &w1) in gh.nodes.iter().zip(&gh.weights) {
        let phi_u = problem.phi.eval(x1);
        if phi_u == 0.0 {
            continue;
        }
        for (&x2, &w2) in gh.nodes.iter().zip(&gh.weights) {
            let v = s * x1 + r * x2;
            let ww = w1 * w2 * phi_u;
            e_fs += ww * problem.activation.eval(v);
            let dv = problem.activation.deriv(v);
            c1 += ww * dv * x1;
            c2 += ww * dv * x2;
        }
    }
    let da = -e_fs;
    if r > 1e-12 {
        let e2 = w_perp / r;
        (da, -(e1 * c1 + e2 * c2) * a)
    } else {
        // w parallel to w*: gradient stays on the axis.
        (da, -e1 * (a * c1))
    }
}

/// Gradient of `U` in the first argument `(a₁, w₁)`, together with the
/// remaining pieces of one fused quadrature pass over
/// `u = q₁z₁, v = αz₁ + βz₂`.
pub fn grad_u_first(
    problem: &MeanFieldProblem,
    a1: f64,
    w1: &DVector<f64>,
    a2: f64,
    w2: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let q1 = w1.norm();
    let gh = GaussHermite::cached(problem.quad_order);
    if q1 < 1e-14 {
        // u ≡ 0: E[σ′(0)σ(⟨w₂,x⟩)x] = σ′(0) E[σ(⟨w₂,x⟩)x] ∈ span(w₂).
        let q2 = w2.norm();
        let s0 = problem.activation.eval(0.0);
        let d0 = problem.activation.deriv(0.0);
        let mut e_s = 0.0;
        let mut e_sz = 0.0;
        for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
            let sv = problem.activation.eval(q2 * x);
            e_s += w * sv;
            e_sz += w * sv * x;
        }
        let da = a2 * s0 * e_s;
        if q2 < 1e-14 {
            return (da, DVector::zeros(w1.len()));
        }
        return (da, (w2 / q2) * (a1 * a2 * d0 * e_sz));
    }
    let e1 = w1 / q1;
    let alpha = e1.dot(w2);
    let w2_perp = w2 - &e1 * alpha;
    let beta = w2_perp.norm();
    let mut e_ss = 0.0;
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for (&x1, &w1q) in gh.nodes.iter().zip(&gh.weights) {
        let u = q1 * x1;
        let su = problem.activation.eval(u);
        let du = problem.activation.deriv(u);
        for (&x2, &w2q) in gh.nodes.iter().zip(&gh.weights) {
            let v = alpha * x1 + beta * x2;
            let sv = problem.activation.eval(v);
            let ww = w1q * w2q;
            e_ss += ww * su * sv;
            let g = ww * du * sv;
            c1 += g * x1;
            c2 += g * x2;
        }
    }
    let da = a2 * e_ss;
    if beta > 1e-12 {
        let e2 = w2_perp / beta;
        (da, (e1 * c1 + e2 * c2) * (a1 * a2))
    } else {
        (da, e1 * (a1 * a2 * c1))
    }
}

/// Population risk by the `V/U` quadrature expansion.
pub fn population_risk_quadrature(problem: &MeanFieldProblem, ens: &ParticleEnsemble) -> f64 {
    let n = ens.len();
    let nf = n as f64;
    let mut risk = 0.5 * problem.target_norm_sq();
    for i in 0..n {
        risk += potential_v(problem, ens.a[i], &ens.w[i]) / nf;
    }
    for i in 0..n {
        for j in 0..=i {
            let u = potential_u(problem, ens.a[i], &ens.w[i], ens.a[j], &ens.w[j]);
            let mult = if i == j { 1.0 } else { 2.0 };
            risk += 0.5 * mult * u / (nf * nf);
        }
    }
    risk
}

/// Population risk by Monte Carlo over covariates (per-sample values of
/// `½(f*(x) − f̂(x))²`).
pub fn population_risk_mc<R: Rng>(
    problem: &MeanFieldProblem,
    ens: &ParticleEnsemble,
    n_mc: usize,
    rng: &mut R,
) -> MeanSem {
    let mut vals = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x = draw_covariate(problem, rng);
        let truth = problem.phi.eval(problem.w_star.dot(&x));
        let pred = ens.predict(problem, &x);
        vals.push(0.5 * (truth - pred) * (truth - pred));
    }
    MeanSem::from_samples(&vals)
}

fn draw_covariate<R: Rng>(problem: &MeanFieldProblem, rng: &mut R) -> DVector<f64> {
    match problem.covariates {
        CovariateLaw::Gaussian => {
            DVector::from_fn(problem.d, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
        CovariateLaw::Sphere => sample_sphere(problem.d, (problem.d as f64).sqrt(), rng),
    }
}

/// Flow force `−∇V(θ_i) − (1/N)Σ_j ∇U(θ_i,θ_j)` for every particle.
pub fn flow_force(problem: &MeanFieldProblem, ens: &ParticleEnsemble) -> Vec<(f64, DVector<f64>)> {
    let n = ens.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let (mut da, mut dw) = grad_v(problem, ens.a[i], &ens.w[i]);
            for j in 0..n {
                let (ua, uw) = grad_u_first(problem, ens.a[i], &ens.w[i], ens.a[j], &ens.w[j]);
                da += ua / nf;
                dw += uw / nf;
            }
            (-da, -dw)
        })
        .collect()
}

/// One forward-Euler step.
pub fn particle_flow_step(
    problem: &MeanFieldProblem,
    ens: &ParticleEnsemble,
    dt: f64,
) -> ParticleEnsemble {
    let force = flow_force(problem, ens);
    let mut out = ens.clone();
    for i in 0..ens.len() {
        out.a[i] += dt * force[i].0;
        out.w[i] += &force[i].1 * dt;
    }
    out.time += dt;
    out
}

/// Flow trajectory with risk recorded each step.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub times: Vec<f64>,
    pub risks: Vec<f64>,
    pub ensemble: ParticleEnsemble,
    /// Final step size after backtracking.
    pub dt: f64,
}

/// Runs the flow for `steps` accepted steps. With `backtrack` the step is
/// halved whenever the population risk increases (gradient-flow structure
/// makes the continuous-time risk non-increasing; Euler overshoot is the
/// only way it can go up).
pub fn particle_flow(
    problem: &MeanFieldProblem,
    init: ParticleEnsemble,
    mut dt: f64,
    steps: usize,
    backtrack: bool,
) -> Result<FlowRun> {
    let mut ens = init;
    let mut risk = population_risk_quadrature(problem, &ens);
    let mut times = vec![ens.time];
    let mut risks = vec![risk];
    for _ in 0..steps {
        let mut attempts = 0;
        loop {
            let next = particle_flow_step(problem, &ens, dt);
            let next_risk = population_risk_quadrature(problem, &next);
            if !backtrack || next_risk <= risk + 1e-10 * risk.abs().max(1.0) {
                ens = next;
                risk = next_risk;
                break;
            }
            dt *= 0.5;
            attempts += 1;
            if attempts > 40 {
                return Err(Error::NoConvergence(
                    "flow backtracking exhausted: risk increases at machine-scale dt".into(),
                ));
            }
        }
        times.push(ens.time);
        risks.push(risk);
    }
    Ok(FlowRun { times, risks, ensemble: ens, dt })
}

/// Online SGD trajectory.
#[derive(Debug, Clone)]
pub struct SgdRun {
    /// `(time = η·step, risk)` checkpoints (risk by quadrature).
    pub checkpoints: Vec<(f64, f64)>,
    pub ensemble: ParticleEnsemble,
}

/// Mean-field SGD with one fresh sample per step:
/// `θ_i ← θ_i + η (y − f̂(x)) ∇_θ σ*(x; θ_i)`.
pub fn online_sgd<R: Rng>(
    problem: &MeanFieldProblem,
    n_particles: usize,
    eta: f64,
    steps: usize,
    rng: &mut R,
    record_every: usize,
) -> Result<SgdRun> {
    let mut ens = ParticleEnsemble::init(problem, n_particles, rng);
    let mut checkpoints = vec![(0.0, population_risk_quadrature(problem, &ens))];
    for step in 0..steps {
        let x = draw_covariate(problem, rng);
        let eps: f64 = rng.sample(StandardNormal);
        let y = problem.phi.eval(problem.w_star.dot(&x)) + problem.tau * eps;
        let resid = y - ens.predict(problem, &x);
        for i in 0..n_particles {
            let z = ens.w[i].dot(&x);
            let s = problem.activation.eval(z);
            let sp = problem.activation.deriv(z);
            let a = ens.a[i];
            ens.a[i] += eta * resid * s;
            ens.w[i] += &x * (eta * resid * a * sp);
            if !ens.a[i].is_finite() || ens.a[i].abs() > 1e6 || ens.w[i].norm() > 1e6 {
                return Err(Error::Numerical(format!(
                    "SGD diverged at step {step}: |a| or ‖w‖ exceeded 1e6"
                )));
            }
        }
        ens.time += eta;
        if record_every > 0 && (step + 1) % record_every == 0 {
            checkpoints.push((ens.time, population_risk_quadrature(problem, &ens)));
        }
    }
    checkpoints.push((ens.time, population_risk_quadrature(problem, &ens)));
    Ok(SgdRun { checkpoints, ensemble: ens })
}

/// Rotation-reduced particles `(a, s, ρ)`, `r = |ρ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEnsemble {
    pub a: Vec<f64>,
    pub s: Vec<f64>,
    /// Signed transverse coordinate; the physical radius is `|ρ|`.
    pub rho: Vec<f64>,
    pub time: f64,
}

impl ReducedEnsemble {
    /// Draws from `ρ̄_init = P_A ⊗ N(0, γ²/d) ⊗ Q_{d−1,γ}`.
    pub fn init<R: Rng>(problem: &MeanFieldProblem, n: usize, rng: &mut R) -> Self {
        let scale = problem.gamma / (problem.d as f64).sqrt();
        let mut a = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(match problem.p_a {
                SecondLayerInit::Delta(v) => v,
                SecondLayerInit::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            });
            s.push(scale * rng.sample::<f64, _>(StandardNormal));
            // r = (γ/√d) χ_{d−1}.
            let chi_sq: f64 = (0..problem.d - 1)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * g
                })
                .sum();
            rho.push(scale * chi_sq.sqrt());
        }
        ReducedEnsemble { a, s, rho, time: 0.0 }
    }

    /// The equivalent coplanar ensemble in the `(w*, e⊥)` plane.
    pub fn embedded(&self) -> ParticleEnsemble {
        ParticleEnsemble {
            a: self.a.clone(),
            w: self
                .s
                .iter()
                .zip(&self.rho)
                .map(|(&s, &r)| DVector::from_vec(vec![s, r]))
                .collect(),
            time: self.time,
        }
    }

    fn from_embedded(ens: &ParticleEnsemble) -> Self {
        ReducedEnsemble {
            a: ens.a.clone(),
            s: ens.w.iter().map(|w| w[0]).collect(),
            rho: ens.w.iter().map(|w| w[1]).collect(),
            time: ens.time,
        }
    }

    pub fn coords(&self) -> Vec<(f64, f64, f64)> {
        self.a
            .iter()
            .zip(self.s.iter().zip(&self.rho))
            .map(|(&a, (&s, &r))| (a, s, r.abs()))
            .collect()
    }

    /// Embeds a full-coordinate ensemble into one plane: particle `i`
    /// becomes `(a_i, s_i, +r_i)` with a shared transverse direction.
    pub fn from_full(ens: &ParticleEnsemble, w_star: &DVector<f64>) -> Self {
        let coords = ens.reduced_coords(w_star);
        ReducedEnsemble {
            a: coords.iter().map(|c| c.0).collect(),
            s: coords.iter().map(|c| c.1).collect(),
            rho: coords.iter().map(|c| c.2).collect(),
            time: ens.time,
        }
    }
}

/// One reduced flow step: the exact flow of the embedded coplanar ensemble.
pub fn reduced_flow_step(
    problem: &MeanFieldProblem,
    ens: &ReducedEnsemble,
    dt: f64,
) -> ReducedEnsemble {
    let p2 = problem.embedded_2d();
    let stepped = particle_flow_step(&p2, &ens.embedded(), dt);
    ReducedEnsemble::from_embedded(&stepped)
}

/// Population risk of a reduced ensemble (via its embedded representative;
/// inner products, hence `V` and `U`, only depend on `(a, s, ρ)`).
pub fn reduced_population_risk(problem: &MeanFieldProblem, ens: &ReducedEnsemble) -> f64 {
    population_risk_quadrature(&problem.embedded_2d(), &ens.embedded())
}

/// Multi-start single-neuron gradient descent report.
#[derive(Debug, Clone)]
pub struct SingleNeuronReport {
    pub w_hat: DVector<f64>,
    /// Maximum pairwise distance between the minimizers found from the
    /// different starts.
    pub max_pairwise_dist: f64,
    /// Population excess risk `E[(σ(⟨w*,x⟩) − σ(⟨ŵ,x⟩))²]` at the common
    /// minimizer, under the spherical covariate law.
    pub excess_risk: f64,
    /// Final empirical risk per start.
    pub train_risks: Vec<f64>,
    pub iterations: Vec<usize>,
}

/// Full-batch gradient descent on `Σ_i (y_i − σ(⟨w,x_i⟩))²` from several
/// random starts. Requires a bounded, smooth, strictly increasing `σ`.
pub fn single_neuron_gd(
    activation: &Activation,
    d: usize,
    n: usize,
    tau: f64,
    n_starts: usize,
    seed: u64,
) -> Result<SingleNeuronReport> {
    if !activation.is_bounded_smooth_increasing() {
        return Err(Error::ConditionViolated(
            "single-neuron landscape needs σ bounded, smooth, strictly increasing".into(),
        ));
    }
    let mut rng = crate::mc::replica_rng(seed, 0);
    let radius = (d as f64).sqrt();
    let mut w_star = DVector::zeros(d);
    w_star[0] = 1.0;
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let row = sample_sphere(d, radius, &mut rng);
        y[i] = activation.eval(row.dot(&w_star)) + tau * rng.sample::<f64, _>(StandardNormal);
        x.row_mut(i).copy_from(&row.transpose());
    }
    let objective = |w: &DVector<f64>| -> f64 {
        let z = &x * w;
        (0..n).map(|i| (y[i] - activation.eval(z[i])).powi(2)).sum()
    };
    let gradient = |w: &DVector<f64>| -> DVector<f64> {
        let z = &x * w;
        let mut coef = DVector::zeros(n);
        for i in 0..n {
            coef[i] = -2.0 * (y[i] - activation.eval(z[i])) * activation.deriv(z[i]);
        }
        x.transpose() * coef
    };
    let mut minimizers: Vec<DVector<f64>> = Vec::with_capacity(n_starts);
    let mut train_risks = Vec::with_capacity(n_starts);
    let mut iterations = Vec::with_capacity(n_starts);
    for start in 0..n_starts {
        let scale = if start == 0 { 1.0 } else { 0.3 * start as f64 };
        let mut w = DVector::from_fn(d, |_, _| {
            scale / (d as f64).sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        let mut f = objective(&w);
        let mut lr = 1.0 / n as f64;
        let mut iters = 0usize;
        let grad_tol = 1e-10 * n as f64;
        loop {
            let g = gradient(&w);
            if g.norm() <= grad_tol || iters >= 200_000 {
                break;
            }
            let cand = &w - &g * lr;
            let fc = objective(&cand);
            if fc <= f {
                w = cand;
                f = fc;
                lr *= 1.1;
            } else {
                lr *= 0.5;
                if lr < 1e-18 {
                    break;
                }
            }
            iters += 1;
        }
        if iters >= 200_000 {
            return Err(Error::NoConvergence(format!(
                "single-neuron GD start {start} did not converge within the iteration budget"
            )));
        }
        minimizers.push(w);
        train_risks.push(f / n as f64);
        iterations.push(iters);
    }
    let mut max_pairwise_dist: f64 = 0.0;
    for i in 0..minimizers.len() {
        for j in 0..i {
            max_pairwise_dist = max_pairwise_dist.max((&minimizers[i] - &minimizers[j]).norm());
        }
    }
    let w_hat = minimizers[0].clone();
    let excess_risk = single_neuron_excess_risk(activation, d, &w_star, &w_hat)?;
    Ok(SingleNeuronReport { w_hat, max_pairwise_dist, excess_risk, train_risks, iterations })
}

/// `E[(σ(⟨w*,x⟩) − σ(⟨ŵ,x⟩))²]` for `x` uniform on `S^{d-1}(√d)`.
pub fn single_neuron_excess_risk(
    activation: &Activation,
    d: usize,
    w_star: &DVector<f64>,
    w_hat: &DVector<f64>,
) -> Result<f64> {
    let sk = crate::funspace::SphereKernels::new(d, &activation.kinks())?;
    let r2 = w_hat.norm();
    let t = if r2 > 0.0 { (w_star.dot(w_hat) / (w_star.norm() * r2)).clamp(-1.0, 1.0) } else { 0.0 };
    let f = |u: f64| activation.eval(u);
    let e_ff = sk.pair_expect(1.0, 1.0, 1.0, f, f, &[]);
    let e_gg = sk.pair_expect(r2, r2, 1.0, f, f, &[]);
    let e_fg = sk.pair_expect(1.0, r2, t, f, f, &activation.kinks());
    Ok((e_ff + e_gg - 2.0 * e_fg).max(0.0))
}
