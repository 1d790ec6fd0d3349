//! Simulation, reduction and data-driven modelling of locomotion at low and
//! intermediate inertia.

mod floats;
pub mod fourier;
pub mod metrics;
pub mod optimize;
pub mod phase;
pub mod reduction;
pub mod regression;
pub mod se2;
pub mod shape;
pub mod swimmer;
pub mod trajectory;

pub use fourier::FourierSeries;
pub use metrics::{gamma_metric, run_sweep, zeroth_order_model, MetricRecord, SweepConfig};
pub use optimize::{goal_eval, goal_gradient, gradient_step, GaitParameterization, GoalFunctional};
pub use phase::{estimate_phase, GaitModels, PhaseAssignment};
pub use reduction::{perturbation_terms, PerturbationTerms, ReducedSystem};
pub use regression::{fit, LocalModel, ModelKind, RegressorConfig};
pub use se2::{BodyVelocity, GroupElement, Momentum, Wrench};
pub use shape::{manual_gait, multiseg_flap_gait, Gait, GaitKind, GaitSpec, NoiseParams};
pub use swimmer::{simulate, SimOptions, SwimmerParams};
pub use trajectory::{ShapeState, Trajectory};
