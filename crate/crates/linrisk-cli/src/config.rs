//! Experiment configuration: a single human-editable TOML file with one
//! table per experiment; command-line flags override the common fields.
//! Unknown keys are rejected.

use linrisk::funspace::{Activation, TargetFunction};
use linrisk::krr::KernelShape;
use linrisk::spectrum::{SpectralModel, SpectrumSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Top-level config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<String>,
    pub format: Option<OutputFormat>,
    pub keep_going: Option<bool>,
    pub predict_risk: Option<PredictRiskParams>,
    pub simulate_ridge: Option<SimulateRidgeParams>,
    pub latent: Option<LatentParamsCfg>,
    pub krr_staircase: Option<KrrStaircaseParams>,
    pub rf_double_descent: Option<RfDoubleDescentParams>,
    pub nt_concentration: Option<NtConcentrationParams>,
    pub nt_vs_krr: Option<NtVsKrrParams>,
    pub meanfield: Option<MeanfieldParams>,
    pub single_neuron: Option<SingleNeuronParams>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: FileConfig = toml::from_str(&text)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Isotropic { p: usize },
    PowerLaw { alpha: f64, p: usize },
    LogPower { beta: f64, p: usize },
    Explicit { values: Vec<f64> },
}

impl SpectrumConfig {
    pub fn to_spec(&self) -> SpectrumSpec {
        match self {
            SpectrumConfig::Isotropic { p } => SpectrumSpec::Explicit(vec![1.0; *p]),
            SpectrumConfig::PowerLaw { alpha, p } => {
                SpectrumSpec::PowerLaw { alpha: *alpha, p_trunc: *p }
            }
            SpectrumConfig::LogPower { beta, p } => {
                SpectrumSpec::LogPower { beta: *beta, p_trunc: *p }
            }
            SpectrumConfig::Explicit { values } => SpectrumSpec::Explicit(values.clone()),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            SpectrumConfig::Isotropic { p }
            | SpectrumConfig::PowerLaw { p, .. }
            | SpectrumConfig::LogPower { p, .. } => *p,
            SpectrumConfig::Explicit { values } => values.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaConfig {
    Zero,
    /// Unit norm spread evenly across all directions.
    FlatUnit,
    /// All mass on the top eigendirection.
    Top { norm: f64 },
    Explicit { values: Vec<f64> },
}

impl BetaConfig {
    pub fn build(&self, p: usize) -> Vec<f64> {
        match self {
            BetaConfig::Zero => vec![0.0; p],
            BetaConfig::FlatUnit => vec![1.0 / (p as f64).sqrt(); p],
            BetaConfig::Top { norm } => {
                let mut v = vec![0.0; p];
                v[0] = *norm;
                v
            }
            BetaConfig::Explicit { values } => values.clone(),
        }
    }
}

pub fn build_model(spectrum: &SpectrumConfig, beta: &BetaConfig) -> anyhow::Result<SpectralModel> {
    let spec = spectrum.to_spec();
    let p = spectrum.p();
    Ok(SpectralModel::from_spec(&spec, beta.build(p))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiteTermCfg {
    pub degree: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActivationConfig {
    Identity,
    Relu,
    Softplus,
    Tanh { scale: f64 },
    SquareHalf,
    HermiteCombo { terms: Vec<HermiteTermCfg> },
}

impl ActivationConfig {
    pub fn build(&self) -> Activation {
        match self {
            ActivationConfig::Identity => Activation::Identity,
            ActivationConfig::Relu => Activation::Relu,
            ActivationConfig::Softplus => Activation::Softplus,
            ActivationConfig::Tanh { scale } => Activation::Tanh { scale: *scale },
            ActivationConfig::SquareHalf => Activation::SquareHalf,
            ActivationConfig::HermiteCombo { terms } => {
                Activation::HermiteCombo(terms.iter().map(|t| (t.degree, t.coeff)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    Linear,
    Exponential,
    RfD { activation: ActivationConfig },
    NtD { activation: ActivationConfig },
}

impl KernelConfig {
    pub fn build(&self) -> KernelShape {
        match self {
            KernelConfig::Linear => KernelShape::Linear,
            KernelConfig::Exponential => KernelShape::Exponential,
            KernelConfig::RfD { activation } => KernelShape::RfD(activation.build()),
            KernelConfig::NtD { activation } => KernelShape::NtD(activation.build()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `⟨β,x⟩` with unit `β` on the first coordinate.
    LinearUnit,
    Ridge { phi: ActivationConfig },
    /// The `√(4/10)He₁ + √(2/10)He₂ + √(1/120)He₄` ridge target.
    ThreeHermite,
    Gp { degree_weights: Vec<f64>, directions: usize, seed: u64 },
}

impl TargetConfig {
    pub fn build(&self, d: usize) -> anyhow::Result<TargetFunction> {
        Ok(match self {
            TargetConfig::LinearUnit => {
                let mut b = vec![0.0; d];
                b[0] = 1.0;
                TargetFunction::linear(b)
            }
            TargetConfig::Ridge { phi } => TargetFunction::ridge(d, phi.build(), None)?,
            TargetConfig::ThreeHermite => TargetFunction::ridge(
                d,
                Activation::HermiteCombo(vec![
                    (1, (0.4f64).sqrt()),
                    (2, (0.2f64).sqrt()),
                    (4, (1.0f64 / 120.0).sqrt()),
                ]),
                None,
            )?,
            TargetConfig::Gp { degree_weights, directions, seed } => {
                TargetFunction::gp(d, degree_weights, *directions, *seed)?
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PredictRiskParams {
    pub spectrum: SpectrumConfig,
    pub beta: BetaConfig,
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub tau: f64,
}

impl Default for PredictRiskParams {
    fn default() -> Self {
        PredictRiskParams {
            spectrum: SpectrumConfig::Isotropic { p: 1000 },
            beta: BetaConfig::FlatUnit,
            n: 500,
            lambdas: vec![0.0],
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateRidgeParams {
    pub spectrum: SpectrumConfig,
    pub beta: BetaConfig,
    pub n: usize,
    pub lambda: f64,
    pub tau: f64,
    /// "gaussian" or "rademacher".
    pub design: String,
}

impl Default for SimulateRidgeParams {
    fn default() -> Self {
        SimulateRidgeParams {
            spectrum: SpectrumConfig::Isotropic { p: 1000 },
            beta: BetaConfig::FlatUnit,
            n: 500,
            lambda: 0.0,
            tau: 0.5,
            design: "gaussian".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LatentParamsCfg {
    pub d: usize,
    pub n: usize,
    pub gammas: Vec<f64>,
    pub mu: f64,
    pub r_theta: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl Default for LatentParamsCfg {
    fn default() -> Self {
        // The low-rank ridge figure: d = 20, τ = 0, r_θ = 1, μ = 1,
        // twenty samples per latent dimension.
        LatentParamsCfg {
            d: 20,
            n: 400,
            gammas: vec![0.5, 0.8, 1.25, 2.0, 4.0, 8.0],
            mu: 1.0,
            r_theta: 1.0,
            tau: 0.0,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct KrrStaircaseParams {
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub lambda: f64,
    pub tau: f64,
    pub kernel: KernelConfig,
    pub target: TargetConfig,
    pub n_test: usize,
    pub delta: f64,
}

impl Default for KrrStaircaseParams {
    fn default() -> Self {
        KrrStaircaseParams {
            d: 25,
            n_grid: vec![125, 533],
            lambda: 0.0,
            tau: 0.1,
            kernel: KernelConfig::Exponential,
            target: TargetConfig::Ridge {
                phi: ActivationConfig::HermiteCombo {
                    terms: vec![HermiteTermCfg { degree: 2, coeff: 1.0 }],
                },
            },
            n_test: 2000,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RfDoubleDescentParams {
    pub d: usize,
    /// `n = n_over_d · d`.
    pub n_over_d: usize,
    /// Width grid as multiples of `n` (may be fractional).
    pub width_ratios: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    pub activation: ActivationConfig,
    pub target: TargetConfig,
    pub n_test: usize,
}

impl Default for RfDoubleDescentParams {
    fn default() -> Self {
        // The double-descent figure setting: linear target, n/d = 3,
        // ridgeless and mildly regularized.
        RfDoubleDescentParams {
            d: 40,
            n_over_d: 3,
            width_ratios: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0, 8.0],
            lambdas: vec![1e-8, 1e-3],
            tau: 0.3,
            activation: ActivationConfig::Relu,
            target: TargetConfig::LinearUnit,
            n_test: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NtConcentrationParams {
    pub d: usize,
    pub n: usize,
    /// Widths `N = m · n/d` for each multiplier `m`.
    pub width_multipliers: Vec<usize>,
    pub activation: ActivationConfig,
    /// W draws per width (the diagnostic is reported per draw).
    pub draws: usize,
}

impl Default for NtConcentrationParams {
    fn default() -> Self {
        NtConcentrationParams {
            d: 20,
            n: 200,
            width_multipliers: vec![2, 4, 8, 16],
            activation: ActivationConfig::Softplus,
            draws: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NtVsKrrParams {
    pub d: usize,
    pub n: usize,
    pub tau: f64,
    pub activation: ActivationConfig,
    pub target: TargetConfig,
    /// Parameter ratios `Nd/n`.
    pub param_ratios: Vec<f64>,
    pub lambda: f64,
    pub n_test: usize,
}

impl Default for NtVsKrrParams {
    fn default() -> Self {
        // d = 20, τ = 0.5, three-Hermite target, n = 444.
        NtVsKrrParams {
            d: 20,
            n: 444,
            tau: 0.5,
            activation: ActivationConfig::Softplus,
            target: TargetConfig::ThreeHermite,
            param_ratios: vec![2.0, 5.0, 10.0, 20.0],
            lambda: 0.0,
            n_test: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MeanfieldParams {
    pub d: usize,
    pub n_particles: usize,
    /// "sgd", "flow", or "reduced".
    pub mode: String,
    pub activation: ActivationConfig,
    pub phi: ActivationConfig,
    pub tau: f64,
    pub gamma: f64,
    pub a_init: f64,
    /// SGD step size; ≤ 0 means `1/(4d)`.
    pub eta: f64,
    pub steps: usize,
    pub dt: f64,
    pub record_every: usize,
    /// Optional path for the final-state JSON.
    pub state_out: Option<String>,
}

impl Default for MeanfieldParams {
    fn default() -> Self {
        MeanfieldParams {
            d: 20,
            n_particles: 64,
            mode: "sgd".into(),
            activation: ActivationConfig::Tanh { scale: 2.0 },
            phi: ActivationConfig::Tanh { scale: 2.0 },
            tau: 0.0,
            gamma: 0.1,
            a_init: 1.0,
            eta: 0.0,
            steps: 0,
            dt: 0.05,
            record_every: 16,
            state_out: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SingleNeuronParams {
    pub d: usize,
    /// ≤ 0 means `40·d·ln d`.
    pub n: usize,
    pub tau: f64,
    pub activation: ActivationConfig,
    pub starts: usize,
}

impl Default for SingleNeuronParams {
    fn default() -> Self {
        SingleNeuronParams {
            d: 20,
            n: 0,
            tau: 0.5,
            activation: ActivationConfig::Tanh { scale: 1.0 },
            starts: 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_losslessly() {
        let cfg = FileConfig {
            seed: Some(7),
            reps: Some(20),
            latent: Some(LatentParamsCfg::default()),
            krr_staircase: Some(KrrStaircaseParams::default()),
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: FileConfig = toml::from_str(&text).unwrap();
        let again = toml::to_string(&back).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 1\nnope = 2\n";
        assert!(toml::from_str::<FileConfig>(text).is_err());
        let text = "[latent]\nd = 20\nn = 400\ngammas = [2.0]\nmu = 1.0\nr-theta = 1.0\ntau = 0.0\nlambda = 0.0\nwhatever = 1\n";
        assert!(toml::from_str::<FileConfig>(text).is_err());
    }

    #[test]
    fn builds_core_types() {
        let m = build_model(
            &SpectrumConfig::PowerLaw { alpha: 2.0, p: 50 },
            &BetaConfig::Top { norm: 1.0 },
        )
        .unwrap();
        assert_eq!(m.p(), 50);
        let t = TargetConfig::ThreeHermite.build(10).unwrap();
        assert!((t.norm_sq() - 1.0).abs() < 0.5);
        let k = KernelConfig::NtD { activation: ActivationConfig::Softplus }.build();
        assert!(matches!(k, KernelShape::NtD(Activation::Softplus)));
    }
}
