//! TOML experiment configuration. One file fully determines a study.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{build_grid, default_eta, DomainSpec, QuadratureGrid};
use crate::error::{config_err, Result};
use crate::kernel::{KernelModel, MCKernelConfig};
use crate::network::{Activation, Architecture, ClipThresholds, ClippingSpec, InitDistribution};
use crate::operator::{bubble_solution, manufactured_problem, sine_solution, HomogenizedProblem, OperatorSpec};
use crate::spectral::DEFAULT_NULL_TOL;
use crate::training::{IntegralMode, Integrator, Observations, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    NegLaplace,
    NegLaplacePlusC { c: f64 },
    AdvectionDiffusion { nu: f64, velocity: Vec<f64>, c: f64 },
    Identity,
    /// The zero map; only useful to exhibit unsolvable configurations.
    Zero,
}

impl OperatorConfig {
    pub fn build(&self, dim: usize) -> Result<OperatorSpec> {
        Ok(match self {
            Self::NegLaplace => OperatorSpec::neg_laplace(dim),
            Self::NegLaplacePlusC { c } => OperatorSpec::neg_laplace_plus_c(dim, *c),
            Self::AdvectionDiffusion { nu, velocity, c } => {
                if velocity.len() != dim {
                    return config_err("advection velocity has the wrong dimension");
                }
                OperatorSpec::advection_diffusion(dim, *nu, velocity.clone(), *c)
            }
            Self::Identity => OperatorSpec::identity(dim),
            Self::Zero => OperatorSpec::zero(dim),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    /// `Π sin(π (x_k − a_k)/(b_k − a_k))` on boxes.
    Sine,
    /// `amplitude · η` with the default cut-off of the domain.
    Bubble,
    Zero,
    /// No known solution; `rhs_constant` supplies `g`.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub solution: SolutionKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub rhs_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_activation")]
    pub activation: String,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub c_bound: f64,
    #[serde(default = "one")]
    pub w_std: f64,
    #[serde(default = "one")]
    pub b_std: f64,
    /// Start every run from `c ≡ 0`.
    #[serde(default)]
    pub zero_output: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClippingConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

impl Default for ClippingConfig {
    fn default() -> Self {
        Self { delta: default_delta(), epsilon: default_epsilon(), enabled: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralModeName {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Zero is allowed and means "no training".
    pub horizon: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default = "default_mode")]
    pub integral_mode: IntegralModeName,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub mc_seed: u64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Widths compared in the empirical-kernel check, ascending.
    #[serde(default = "default_lln_widths")]
    pub lln_widths: Vec<usize>,
    #[serde(default = "default_lln_seeds")]
    pub lln_seeds: usize,
    /// Points per side of the empirical-kernel point set.
    #[serde(default = "default_lln_points")]
    pub lln_points: usize,
    /// Monte Carlo budget of the reference kernel in that check.
    #[serde(default = "default_lln_samples")]
    pub lln_samples: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 1,
            lln_widths: default_lln_widths(),
            lln_seeds: default_lln_seeds(),
            lln_points: default_lln_points(),
            lln_samples: default_lln_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: Vec<usize>,
    /// Finer rule used to measure errors away from the collocation nodes.
    #[serde(default)]
    pub eval_resolution: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    #[serde(default = "default_tau")]
    pub null_tol: f64,
    /// Explicit Euler step as a fraction of `1/λ₁`.
    #[serde(default = "default_euler_factor")]
    pub euler_dt_factor: f64,
    #[serde(default = "default_spectral_horizon")]
    pub horizon: f64,
    #[serde(default = "default_top_modes")]
    pub top_modes: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            null_tol: DEFAULT_NULL_TOL,
            euler_dt_factor: default_euler_factor(),
            horizon: default_spectral_horizon(),
            top_modes: default_top_modes(),
        }
    }
}

/// Finer discretisation used for the refinement comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    pub resolution: Vec<usize>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub operator: OperatorConfig,
    pub problem: ProblemConfig,
    pub network: NetworkConfig,
    #[serde(default)]
    pub clipping: ClippingConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub observations: ObservationConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub refinement: Option<RefinementConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let d = self.domain.dim();
        self.operator.build(d)?;
        let net = &self.network;
        if net.widths.is_empty() || net.widths.contains(&0) {
            return config_err("network widths must be a nonempty list of positive integers");
        }
        if net.widths.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("network widths must be strictly increasing");
        }
        if net.seeds.is_empty() {
            return config_err("at least one network seed is required");
        }
        Activation::from_name(&net.activation)?.validate()?;
        self.init_distribution().validate()?;
        self.clip_spec()?;
        let t = &self.training;
        if !(t.horizon >= 0.0 && t.horizon.is_finite()) {
            return config_err("training horizon must be nonnegative");
        }
        if t.horizon > 0.0 {
            self.train_config()?;
        }
        if self.kernel.samples == 0 || self.kernel.lln_samples == 0 {
            return config_err("kernel sample counts must be positive");
        }
        if self.kernel.lln_widths.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("empirical-kernel widths must be strictly increasing");
        }
        self.grid()?;
        self.eval_grid()?;
        if let Some(r) = &self.refinement {
            build_grid(&self.domain, &r.resolution)?;
            if r.samples == 0 {
                return config_err("refinement sample count must be positive");
            }
        }
        let s = &self.spectral;
        if !(s.null_tol >= 0.0 && s.euler_dt_factor > 0.0 && s.horizon >= 0.0) {
            return config_err("spectral tolerances, step factor and horizon must be nonnegative");
        }
        let p = &self.problem;
        match (p.solution, p.rhs_constant) {
            (SolutionKind::None, None) => return config_err("problem without solution needs rhs_constant"),
            (SolutionKind::None, Some(_)) => {}
            (_, Some(_)) => return config_err("rhs_constant is only allowed with solution = \"none\""),
            _ => {}
        }
        self.problem()?;
        self.observations()?;
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        Activation::from_name(&self.network.activation).expect("validated")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { eta: default_eta(&self.domain), act: self.activation() }
    }

    pub fn operator(&self) -> OperatorSpec {
        self.operator.build(self.domain.dim()).expect("validated")
    }

    pub fn init_distribution(&self) -> InitDistribution {
        InitDistribution { c_bound: self.network.c_bound, w_std: self.network.w_std, b_std: self.network.b_std }
    }

    pub fn kernel_model(&self) -> KernelModel {
        let arch = self.architecture();
        KernelModel { eta: arch.eta, act: arch.act, op: self.operator(), dist: self.init_distribution() }
    }

    pub fn mc_config(&self) -> MCKernelConfig {
        MCKernelConfig { samples: self.kernel.samples, seed: self.kernel.seed }
    }

    pub fn clip_spec(&self) -> Result<ClippingSpec> {
        ClippingSpec::new(self.network.beta, self.clipping.delta, self.clipping.epsilon)
    }

    pub fn clip_thresholds(&self, width: usize) -> ClipThresholds {
        if self.clipping.enabled {
            self.clip_spec().expect("validated").thresholds(width)
        } else {
            ClipThresholds::inactive()
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.training;
        let tc = TrainConfig {
            dt: t.dt,
            horizon: t.horizon,
            integrator: t.integrator,
            integral_mode: match t.integral_mode {
                IntegralModeName::Quadrature => IntegralMode::Quadrature,
                IntegralModeName::MonteCarlo => IntegralMode::MonteCarlo { batch: t.batch, seed: t.mc_seed },
            },
            snapshot_stride: t.snapshot_stride,
            keep_params: false,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn grid(&self) -> Result<QuadratureGrid> {
        build_grid(&self.domain, &self.grid.resolution)
    }

    pub fn eval_grid(&self) -> Result<QuadratureGrid> {
        let res = self.grid.eval_resolution.clone().unwrap_or_else(|| vec![64; self.domain.dim()]);
        build_grid(&self.domain, &res)
    }

    pub fn problem(&self) -> Result<HomogenizedProblem> {
        let op = self.operator();
        let p = &self.problem;
        match p.solution {
            SolutionKind::Sine => manufactured_problem(&self.domain, &op, sine_solution(&self.domain, p.amplitude)?),
            SolutionKind::Bubble => manufactured_problem(&self.domain, &op, bubble_solution(&self.domain, p.amplitude)),
            SolutionKind::Zero => Ok(HomogenizedProblem::trivial(self.domain.clone(), op)),
            SolutionKind::None => {
                let g = p.rhs_constant.expect("validated");
                Ok(HomogenizedProblem::new(op, Arc::new(move |_| g), self.domain.clone(), None))
            }
        }
    }

    /// Observations of the exact solution, or `None` when none are configured.
    pub fn observations(&self) -> Result<Option<Observations>> {
        let o = &self.observations;
        if o.count == 0 && o.points.as_ref().is_none_or(|p| p.is_empty()) {
            return Ok(None);
        }
        let problem_exact = match self.problem.solution {
            SolutionKind::Sine => sine_solution(&self.domain, self.problem.amplitude)?,
            SolutionKind::Bubble => bubble_solution(&self.domain, self.problem.amplitude),
            SolutionKind::Zero => {
                let d = self.domain.dim();
                Arc::new(move |_: &[f64]| crate::jet::Jet2::zero(d))
            }
            SolutionKind::None => return config_err("observations need a known solution"),
        };
        match &o.points {
            Some(points) if !points.is_empty() => {
                if o.count != 0 && o.count != points.len() {
                    return config_err("observation count disagrees with the explicit points");
                }
                let values = points.iter().map(|p| problem_exact(p).value).collect();
                Observations::new(&self.domain, points.clone(), values).map(Some)
            }
            _ => Observations::placed(&self.domain, o.count, &problem_exact).map(Some),
        }
    }

    /// Replaces every seed with consecutive values starting at `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        let n = self.network.seeds.len() as u64;
        self.network.seeds = (seed..seed + n).collect();
        self.kernel.seed = seed;
        self.training.mc_seed = seed;
    }

    /// Reduced sizes for smoke runs.
    pub fn make_quick(&mut self) {
        let k = &mut self.kernel;
        k.samples = k.samples.min(10_000);
        k.lln_samples = k.lln_samples.min(20_000);
        k.lln_seeds = k.lln_seeds.min(3);
        k.lln_widths = k.lln_widths.iter().map(|w| (*w).min(10_000)).collect();
        k.lln_widths.dedup();
        let mut widths: Vec<usize> = self.network.widths.iter().map(|w| (*w / 4).max(10)).collect();
        widths.dedup();
        self.network.widths = widths;
        self.network.seeds.truncate(3);
        if let Some(r) = &mut self.refinement {
            r.samples = r.samples.min(40_000);
        }
        self.spectral.horizon = self.spectral.horizon.min(1e3);
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_beta() -> f64 {
    0.6
}
fn default_delta() -> f64 {
    0.05
}
fn default_epsilon() -> f64 {
    0.12
}
fn default_activation() -> String {
    "tanh".into()
}
fn default_dt() -> f64 {
    0.01
}
fn default_integrator() -> Integrator {
    Integrator::Rk4
}
fn default_mode() -> IntegralModeName {
    IntegralModeName::Quadrature
}
fn default_batch() -> usize {
    256
}
fn default_stride() -> usize {
    10
}
fn default_samples() -> usize {
    200_000
}
fn default_lln_widths() -> Vec<usize> {
    vec![1_000, 100_000]
}
fn default_lln_seeds() -> usize {
    10
}
fn default_lln_points() -> usize {
    5
}
fn default_lln_samples() -> usize {
    1_000_000
}
fn default_tau() -> f64 {
    DEFAULT_NULL_TOL
}
fn default_euler_factor() -> f64 {
    0.05
}
fn default_spectral_horizon() -> f64 {
    1e5
}
fn default_top_modes() -> usize {
    5
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [domain]
        kind = "interval"
        lower = 0.0
        upper = 1.0

        [operator]
        name = "neg_laplace"

        [problem]
        solution = "sine"

        [network]
        widths = [10, 20, 40]
        seeds = [1, 2, 3]

        [training]
        horizon = 1.0

        [grid]
        resolution = [16]
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.network.beta, 0.6);
        assert_eq!(cfg.clipping.delta, 0.05);
        assert_eq!(cfg.clipping.epsilon, 0.12);
        assert_eq!(cfg.spectral.null_tol, 1e-10);
        assert_eq!(cfg.kernel.samples, 200_000);
        assert_eq!(cfg.train_config().unwrap().dt, 0.01);
        assert!(cfg.observations().unwrap().is_none());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = MINIMAL.replace("widths = [10, 20, 40]", "widths = [20, 10]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("widths = [10, 20, 40]", "widths = []");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("resolution = [16]", "resolution = [1]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("solution = \"sine\"", "solution = \"none\"");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("[training]", "[training]\nunknown_key = 3");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("{MINIMAL}\n[clipping]\ndelta = 0.2\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn overrides_and_hash() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let h = cfg.hash();
        cfg.override_seeds(40);
        assert_eq!(cfg.network.seeds, vec![40, 41, 42]);
        assert_ne!(cfg.hash(), h);
        cfg.make_quick();
        assert!(cfg.network.widths.windows(2).all(|w| w[0] < w[1]));
        cfg.validate().unwrap();
    }

    #[test]
    fn observations_from_points() {
        let text = format!("{MINIMAL}\n[observations]\npoints = [[0.25], [0.5]]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let obs = cfg.observations().unwrap().unwrap();
        assert_eq!(obs.len(), 2);
        assert!((obs.values()[1] - 1.0).abs() < 1e-15);
    }
}
