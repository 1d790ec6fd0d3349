//! Goal functionals evaluated through a fitted local model, their gradients
//! with respect to gait parameters, and tube-respecting gradient steps.
//!
//! Every evaluation reuses the same [`LocalModel`]; no new experiments are
//! run while differentiating.

use crate::fourier::FourierSeries;
use crate::phase::GaitModels;
use crate::regression::{LocalModel, RegressionError};
use crate::se2::BodyVelocity;
use crate::trajectory::ShapeState;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

/// Quadrature nodes per period for goal integrals.
pub const GOAL_NODES: usize = 256;
/// Finite-difference step relative to each coefficient's scale.
pub const GRADIENT_STEP: f64 = 1e-4;
const MAX_SHRINKS: usize = 40;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamDim { expected: usize, got: usize },
    #[error("coefficient index {0} out of range")]
    Index(usize),
    #[error("gait leaves the model's validity tube at {nodes} of {total} nodes")]
    OutsideTube { nodes: usize, total: usize },
    #[error("non-finite goal value")]
    NonFinite,
    #[error("invalid step size {0}")]
    BadStep(f64),
    #[error("unknown goal {0:?}; expected body_x, body_y or body_theta")]
    UnknownGoal(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Integrand of a custom goal: shape state and predicted body velocity.
pub type GoalIntegrand = Arc<dyn Fn(&ShapeState, &BodyVelocity) -> f64 + Send + Sync>;

/// Per-cycle objective; body-frame displacements are integrals of `ξ`, not
/// world displacements.
#[derive(Clone)]
pub enum GoalFunctional {
    BodyX,
    BodyY,
    BodyTheta,
    Custom(GoalIntegrand),
}

impl GoalFunctional {
    pub fn integrand(&self, shape: &ShapeState, xi: &BodyVelocity) -> f64 {
        match self {
            Self::BodyX => xi.x(),
            Self::BodyY => xi.y(),
            Self::BodyTheta => xi.theta(),
            Self::Custom(f) => f(shape, xi),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BodyX => "body_x",
            Self::BodyY => "body_y",
            Self::BodyTheta => "body_theta",
            Self::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for GoalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GoalFunctional {
    type Err = OptimizeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "body_x" | "x" => Ok(Self::BodyX),
            "body_y" | "y" => Ok(Self::BodyY),
            "body_theta" | "theta" => Ok(Self::BodyTheta),
            other => Err(OptimizeError::UnknownGoal(other.to_string())),
        }
    }
}

/// `γ_p`: a base gait plus perturbations of selected Fourier coefficients.
///
/// Indices refer to [`FourierSeries::to_flat`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitParameterization {
    pub base: FourierSeries,
    pub rate: f64,
    pub indices: Vec<usize>,
    pub alpha_max: f64,
}

impl GaitParameterization {
    /// All coefficients of the model's own gait.
    pub fn from_gait(gait: &GaitModels, alpha_max: f64) -> Self {
        let n = gait.gamma.to_flat().len();
        Self { base: gait.gamma.clone(), rate: gait.rate, indices: (0..n).collect(), alpha_max }
    }

    pub fn with_indices(mut self, indices: Vec<usize>) -> Result<Self, OptimizeError> {
        let n = self.base.to_flat().len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(OptimizeError::Index(bad));
        }
        self.indices = indices;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Flat index of coefficient `(harmonic, coordinate)`; harmonic 0 is the
    /// mean, then cosine and sine of harmonic `k` at `2k − 1` and `2k`.
    pub fn flat_index(&self, slot: usize, coordinate: usize) -> usize {
        slot * self.base.dim() + coordinate
    }

    /// Per-parameter scale used for finite-difference steps.
    pub fn scales(&self) -> Vec<f64> {
        let flat = self.base.to_flat();
        self.indices.iter().map(|&i| flat[i].abs().max(1.0)).collect()
    }

    pub fn series(&self, p: &[f64]) -> Result<FourierSeries, OptimizeError> {
        if p.len() != self.dim() {
            return Err(OptimizeError::ParamDim { expected: self.dim(), got: p.len() });
        }
        let mut flat = self.base.to_flat();
        for (&i, v) in self.indices.iter().zip(p) {
            flat[i] += v;
        }
        Ok(FourierSeries::from_flat(self.base.dim(), self.base.order(), &flat))
    }

    pub fn gait(&self, p: &[f64]) -> Result<GaitModels, OptimizeError> {
        Ok(GaitModels::differentiated(self.series(p)?, self.rate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalValue {
    pub value: f64,
    /// Quadrature nodes at which `γ_p` leaves the model's tube.
    pub outside_tube: usize,
}

/// Integrates the goal over one period of `γ_p` with the model-predicted `ξ`
/// (periodic trapezoid rule on [`GOAL_NODES`] nodes).
pub fn goal_eval(model: &LocalModel, param: &GaitParameterization, p: &[f64], goal: &GoalFunctional) -> Result<GoalValue, OptimizeError> {
    let gait = param.gait(p)?;
    let dphi = TAU / GOAL_NODES as f64;
    let mut sum = 0.0;
    let mut outside = 0;
    for j in 0..GOAL_NODES {
        let phi = j as f64 * dphi;
        let s = gait.at(phi);
        let g = model.gait.at(phi);
        let d: Vec<f64> = s.alpha.iter().zip(&g.alpha).map(|(a, b)| a - b).collect();
        let dd: Vec<f64> = s.alpha_dot.iter().zip(&g.alpha_dot).map(|(a, b)| a - b).collect();
        let ddd: Vec<f64> = s.alpha_ddot.iter().zip(&g.alpha_ddot).map(|(a, b)| a - b).collect();
        if !model.in_tube(phi, &d, &dd, &ddd) {
            outside += 1;
        }
        let xi = model.predict(phi, &d, &dd, &ddd)?;
        sum += goal.integrand(&s, &xi);
    }
    let value = sum * dphi / param.rate;
    if !value.is_finite() {
        return Err(OptimizeError::NonFinite);
    }
    if outside > 0 {
        log::warn!("goal evaluated outside the validity tube at {outside} of {GOAL_NODES} nodes");
    }
    Ok(GoalValue { value, outside_tube: outside })
}

/// Central-difference gradient of the goal with respect to `p`.
pub fn goal_gradient(model: &LocalModel, param: &GaitParameterization, p: &[f64], goal: &GoalFunctional) -> Result<Vec<f64>, OptimizeError> {
    let scales = param.scales();
    let mut grad = vec![0.0; param.dim()];
    let mut q = p.to_vec();
    for i in 0..param.dim() {
        let h = GRADIENT_STEP * scales[i];
        let mut side = |x: f64| -> Result<f64, OptimizeError> {
            q[i] = x;
            let v = goal_eval(model, param, &q, goal)?;
            if v.outside_tube > 0 {
                return Err(OptimizeError::OutsideTube { nodes: v.outside_tube, total: GOAL_NODES });
            }
            Ok(v.value)
        };
        let plus = side(p[i] + h)?;
        let minus = side(p[i] - h)?;
        q[i] = p[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub p: Vec<f64>,
    pub alpha: f64,
    pub goal_before: f64,
    pub goal_after: f64,
    pub gradient_norm: f64,
    /// Zero gradient: `p` is an extremal candidate and was left unchanged.
    pub extremal: bool,
    /// Number of times the step size was halved.
    pub shrinks: usize,
}

impl StepOutcome {
    pub fn improvement(&self) -> f64 {
        self.goal_after - self.goal_before
    }
}

/// `p′ = p + α ∇φ`, halving `α` (starting from `min(α, α_max)`) until `γ_{p′}`
/// stays in the tube and the model-predicted goal does not decrease.
pub fn gradient_step(
    model: &LocalModel,
    param: &GaitParameterization,
    p: &[f64],
    goal: &GoalFunctional,
    alpha: f64,
) -> Result<StepOutcome, OptimizeError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(OptimizeError::BadStep(alpha));
    }
    let before = goal_eval(model, param, p, goal)?.value;
    let grad = goal_gradient(model, param, p, goal)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let unchanged = |alpha, shrinks, extremal| StepOutcome {
        p: p.to_vec(),
        alpha,
        goal_before: before,
        goal_after: before,
        gradient_norm: norm,
        extremal,
        shrinks,
    };
    if norm == 0.0 {
        return Ok(unchanged(0.0, 0, true));
    }
    let mut a = alpha.min(param.alpha_max);
    for shrinks in 0..=MAX_SHRINKS {
        let q: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x + a * g).collect();
        let v = goal_eval(model, param, &q, goal)?;
        if v.outside_tube == 0 && v.value >= before {
            return Ok(StepOutcome { p: q, alpha: a, goal_before: before, goal_after: v.value, gradient_norm: norm, extremal: false, shrinks });
        }
        log::info!(
            "shrinking step {a:.3e}: {}",
            if v.outside_tube > 0 { "outside tube" } else { "goal decreased" }
        );
        a *= 0.5;
    }
    Ok(unchanged(0.0, MAX_SHRINKS, false))
}

/// One line of the optimization log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub p: Vec<f64>,
    pub goal_before: f64,
    pub goal_after: f64,
    pub gradient_norm: f64,
    pub alpha: f64,
    pub shrinks: usize,
    pub extremal: bool,
}

impl LogEntry {
    pub fn from_step(iteration: usize, step: &StepOutcome) -> Self {
        Self {
            iteration,
            p: step.p.clone(),
            goal_before: step.goal_before,
            goal_after: step.goal_after,
            gradient_norm: step.gradient_norm,
            alpha: step.alpha,
            shrinks: step.shrinks,
            extremal: step.extremal,
        }
    }
}

pub fn write_log_line<W: Write>(mut w: W, entry: &LogEntry) -> Result<(), OptimizeError> {
    let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{stokes_model_from_connection, Block};
    use crate::shape::{manual_gait, GaitKind};
    use crate::swimmer::SwimmerParams;

    fn model_of(kind: GaitKind) -> (LocalModel, GaitParameterization) {
        let gait = GaitModels::from_series(&manual_gait(kind, 1.0).series);
        let model = stokes_model_from_connection(&SwimmerParams::default(), &gait, 32, 12).unwrap();
        let param = GaitParameterization::from_gait(&gait, 0.5);
        (model, param)
    }

    fn flap_model() -> (LocalModel, GaitParameterization) {
        model_of(GaitKind::SymmetricFlap)
    }

    #[test]
    fn symmetric_flap_has_no_lateral_displacement() {
        let (model, param) = flap_model();
        let p = vec![0.0; param.dim()];
        let y = goal_eval(&model, &param, &p, &GoalFunctional::BodyY).unwrap();
        assert!(y.value.abs() < 1e-10, "{}", y.value);
        assert_eq!(y.outside_tube, 0);
    }

    #[test]
    fn reciprocal_and_mirror_reversed_strokes() {
        let (model, param) = flap_model();
        let p = vec![0.0; param.dim()];
        let x = goal_eval(&model, &param, &p, &GoalFunctional::BodyX).unwrap();
        assert!(x.value.abs() < 1e-8, "{}", x.value);
        // the mirrored circle is the circle reversed, so it cannot advance along x
        let (model, param) = model_of(GaitKind::Circle);
        let x = goal_eval(&model, &param, &p, &GoalFunctional::BodyX).unwrap();
        let y = goal_eval(&model, &param, &p, &GoalFunctional::BodyY).unwrap();
        assert!(x.value.abs() < 1e-8, "{}", x.value);
        assert!(y.value.abs() > 1e-3, "{}", y.value);
    }

    #[test]
    fn frozen_shape_goes_nowhere() {
        let (model, param) = flap_model();
        let flat = param.base.to_flat();
        let d = param.base.dim();
        // cancel every oscillating coefficient
        let p: Vec<f64> = (0..flat.len()).map(|i| if i < d { 0.0 } else { -flat[i] }).collect();
        let v = goal_eval(&model, &param, &p, &GoalFunctional::BodyX).unwrap();
        assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn gradient_of_quadratic_goal() {
        // constant-coefficient model with ξ^x = c0 + δ^T w: goal is linear in the
        // mean shift, so a custom quadratic integrand has a known gradient
        let (mut model, param) = flap_model();
        model.interpolant = FourierSeries::zeros(model.interpolant.dim(), model.interpolant.order());
        let layout = model.layout();
        let delta = layout.iter().find(|(b, _)| *b == Block::Delta).unwrap().1.clone();
        let cols = model.columns();
        model.interpolant.mean[delta.start] = 1.0;
        model.interpolant.mean[delta.start + 1] = 2.0;
        let _ = cols;
        let param = param.with_indices(vec![0, 1]).unwrap();
        let goal = GoalFunctional::Custom(Arc::new(|_, xi: &BodyVelocity| xi.x() * xi.x()));
        let p = [0.3, -0.1];
        let g = goal_gradient(&model, &param, &p, &goal).unwrap();
        // ξ^x = p0 + 2 p1 at every node, goal = 2π (p0 + 2 p1)²
        let s = p[0] + 2.0 * p[1];
        let exact = [2.0 * TAU * s, 4.0 * TAU * s];
        for k in 0..2 {
            assert!((g[k] - exact[k]).abs() < 1e-6, "{g:?} vs {exact:?}");
        }
    }

    #[test]
    fn lateral_gradient_vanishes_on_symmetric_directions() {
        let (model, param) = flap_model();
        let p = vec![0.0; param.dim()];
        let g = goal_gradient(&model, &param, &p, &GoalFunctional::BodyY).unwrap();
        let d = param.base.dim();
        let slots = param.base.to_flat().len() / d;
        let mut sym: f64 = 0.0;
        let mut anti: f64 = 0.0;
        for s in 0..slots {
            // mirror maps (r1, r2) to (−r2, −r1)
            let (a, b) = (g[param.flat_index(s, 0)], g[param.flat_index(s, 1)]);
            sym = sym.max((a - b).abs());
            anti = anti.max((a + b).abs());
        }
        assert!(sym < 1e-8, "symmetric projection {sym}");
        assert!(anti > 1e-3, "antisymmetric projection {anti}");
    }

    #[test]
    fn forward_and_central_differences_agree() {
        let (model, param) = flap_model();
        let p = vec![0.0; param.dim()];
        let goal = GoalFunctional::BodyX;
        let g = goal_gradient(&model, &param, &p, &goal).unwrap();
        let f0 = goal_eval(&model, &param, &p, &goal).unwrap().value;
        let h = 1e-5;
        for i in [0, 2, 3] {
            let mut q = p.clone();
            q[i] += h;
            let fwd = (goal_eval(&model, &param, &q, &goal).unwrap().value - f0) / h;
            assert!((fwd - g[i]).abs() < 1e-3, "{i}: {fwd} vs {}", g[i]);
        }
    }

    #[test]
    fn step_improves_goal() {
        for kind in [GaitKind::SymmetricFlap, GaitKind::Circle] {
            let (model, param) = model_of(kind);
            let p = vec![0.0; param.dim()];
            let out = gradient_step(&model, &param, &p, &GoalFunctional::BodyX, 0.01).unwrap();
            assert!(!out.extremal);
            assert!(out.improvement() > 0.0, "{kind:?}");
            assert!(out.gradient_norm > 0.0);
        }
    }

    #[test]
    fn step_shrinks_into_tube() {
        let (mut model, param) = flap_model();
        model.tube = vec![[0.01, 0.01, 0.01]; model.sections];
        let p = vec![0.0; param.dim()];
        let out = gradient_step(&model, &param, &p, &GoalFunctional::BodyX, 0.5).unwrap();
        assert!(out.shrinks > 0);
        let v = goal_eval(&model, &param, &out.p, &GoalFunctional::BodyX).unwrap();
        assert_eq!(v.outside_tube, 0);
        assert!(out.improvement() >= 0.0);
    }

    #[test]
    fn zero_gradient_is_extremal() {
        let (model, param) = flap_model();
        let goal = GoalFunctional::Custom(Arc::new(|_, _| 1.0));
        let p = vec![0.1; param.dim()];
        let out = gradient_step(&model, &param, &p, &goal, 0.1).unwrap();
        assert!(out.extremal);
        assert_eq!(out.p, p);
    }

    #[test]
    fn goal_parsing_and_log() {
        assert!(matches!("body_x".parse::<GoalFunctional>(), Ok(GoalFunctional::BodyX)));
        assert!("up".parse::<GoalFunctional>().is_err());
        let mut buf = Vec::new();
        let step = StepOutcome { p: vec![0.5], alpha: 0.1, goal_before: 1.0, goal_after: 1.5, gradient_norm: 0.25, extremal: false, shrinks: 1 };
        let e = LogEntry::from_step(2, &step);
        write_log_line(&mut buf, &e).unwrap();
        let back: LogEntry = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, e);
        assert!(buf.ends_with(b"\n"));
    }
}
