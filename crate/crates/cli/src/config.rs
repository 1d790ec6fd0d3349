use crate::CliError;
use serde::{Deserialize, Serialize};
use slowgait::metrics::SweepConfig;
use slowgait::regression::{ModelKind, RegressorConfig};
use slowgait::shape::{Gait, GaitKind, GaitSpec, NoiseParams};
use slowgait::swimmer::SwimmerParams;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub cycles: usize,
    pub samples_per_cycle: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { cycles: 30, samples_per_cycle: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// `body_x`, `body_y` or `body_theta`.
    pub goal: String,
    pub iterations: usize,
    pub alpha: f64,
    pub alpha_max: f64,
    /// Regressor family of the model each step is taken on.
    pub model: ModelKind,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { goal: "body_x".into(), iterations: 3, alpha: 0.05, alpha_max: 0.5, model: ModelKind::PerturbedStokes }
    }
}

/// Everything a run depends on. `seed` is the master seed: it replaces
/// `noise.seed` and `sweep.base_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub swimmer: SwimmerParams,
    pub gait: GaitSpec,
    pub noise: NoiseParams,
    pub stokes: RegressorConfig,
    pub perturbed: RegressorConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepConfig,
    pub sweep_gaits: Vec<GaitSpec>,
    pub optimize: OptimizeConfig,
}

fn manual(kind: GaitKind) -> GaitSpec {
    GaitSpec::Manual { kind, amplitude: 1.0 }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            swimmer: SwimmerParams::default(),
            gait: manual(GaitKind::SymmetricFlap),
            noise: NoiseParams::default(),
            stokes: RegressorConfig::of_kind(ModelKind::Stokes),
            perturbed: RegressorConfig::of_kind(ModelKind::PerturbedStokes),
            simulate: SimulateConfig::default(),
            sweep: SweepConfig::default(),
            sweep_gaits: vec![manual(GaitKind::TwistInPlace), manual(GaitKind::SymmetricFlap), manual(GaitKind::Circle)],
            optimize: OptimizeConfig::default(),
        }
    }
}

fn config_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Applies the master seed and pins the regressor kinds.
    pub fn normalized(mut self) -> Self {
        self.noise.seed = self.seed;
        self.sweep.base_seed = self.seed;
        self.stokes.kind = ModelKind::Stokes;
        self.perturbed.kind = ModelKind::PerturbedStokes;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.swimmer.validate().map_err(|e| config_err("swimmer", e))?;
        let gait = self.gait.build().map_err(|e| config_err("gait", e))?;
        if gait.shape_dim() != self.swimmer.n {
            return Err(CliError::Config(format!(
                "gait: shape dimension {} does not match swimmer.n = {}",
                gait.shape_dim(),
                self.swimmer.n
            )));
        }
        self.noise.validate().map_err(|e| config_err("noise", e))?;
        self.stokes.validate().map_err(|e| config_err("stokes", e))?;
        self.perturbed.validate().map_err(|e| config_err("perturbed", e))?;
        self.sweep.validate().map_err(|e| config_err("sweep", e))?;
        if self.simulate.cycles == 0 {
            return Err(config_err("simulate.cycles", "must be positive"));
        }
        if self.simulate.samples_per_cycle < 16 {
            return Err(config_err("simulate.samples_per_cycle", "must be at least 16"));
        }
        for (i, g) in self.sweep_gaits.iter().enumerate() {
            g.build().map_err(|e| config_err(&format!("sweep_gaits[{i}]"), e))?;
        }
        self.optimize.goal.parse::<slowgait::optimize::GoalFunctional>().map_err(|e| config_err("optimize.goal", e))?;
        if !(self.optimize.alpha > 0.0 && self.optimize.alpha_max > 0.0) {
            return Err(config_err("optimize.alpha", "step sizes must be positive"));
        }
        Ok(())
    }

    pub fn build_gait(&self) -> Result<Gait, CliError> {
        self.gait.build().map_err(|e| config_err("gait", e))
    }

    /// Swimmer parameters with as many segments as `gait` has shape coordinates.
    pub fn swimmer_for(&self, gait: &Gait) -> SwimmerParams {
        self.swimmer.clone().with_segments(gait.shape_dim())
    }
}
