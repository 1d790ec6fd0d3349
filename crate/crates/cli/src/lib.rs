//! Experiment harness: configuration, orchestration and reproducible output
//! for the `slowgait` command.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_evaluate, cmd_fit, cmd_optimize, cmd_selftest, cmd_simulate, cmd_sweep};
pub use config::ExperimentConfig;
pub use manifest::Manifest;

use slowgait::metrics::MetricError;
use slowgait::optimize::OptimizeError;
use slowgait::phase::PhaseError;
use slowgait::regression::RegressionError;
use slowgait::shape::ShapeError;
use slowgait::swimmer::SwimmerError;
use slowgait::trajectory::TrajectoryError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl From<SwimmerError> for CliError {
    fn from(e: SwimmerError) -> Self {
        match e {
            SwimmerError::NonFinite { .. } | SwimmerError::SingularDrag => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<PhaseError> for CliError {
    fn from(e: PhaseError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<RegressionError> for CliError {
    fn from(e: RegressionError) -> Self {
        match e {
            RegressionError::Config(_) => Self::Config(e.to_string()),
            RegressionError::NoData => Self::Input(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Config(_) => Self::Config(e.to_string()),
            MetricError::Swimmer(s) => s.into(),
            MetricError::Shape(s) => s.into(),
            MetricError::Regression(r) => r.into(),
            MetricError::Io(io) => Self::Io(io),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::UnknownGoal(_) | OptimizeError::BadStep(_) | OptimizeError::Index(_) => Self::Config(e.to_string()),
            OptimizeError::Io(io) => Self::Io(io),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Io(io) => Self::Io(io),
            _ => Self::Input(e.to_string()),
        }
    }
}
