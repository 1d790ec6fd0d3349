//! Prediction-quality metrics and ε-sweeps comparing the two regressor
//! families against a phase-only baseline.
//!
//! For each body component `k`, `Γ^k = 1 − e^k/e^k_a` where `e^k` is the RMS
//! error of a model and `e^k_a` that of the zeroth-order phase model.
//! `Δ^k = Γ^k_p − Γ^k_s` compares perturbed against Stokes regressors.

use crate::phase::{estimate_phase, fit_fourier, fit_gait_models, FourierModel, GaitModels, PhaseAssignment, PhaseConfig, PhaseError};
use crate::regression::{fit, FitData, LocalModel, ModelKind, RegressionError, RegressorConfig};
use crate::se2::{BodyVelocity, GroupElement};
use crate::shape::{noisy_shape_signal_span, Gait, NoiseParams, ShapeError};
use crate::swimmer::{simulate, stokes_momentum, SimOptions, SwimmerError, SwimmerParams};
use crate::trajectory::{format_sig17, ShapeSignal, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const COMPONENTS: [&str; 3] = ["x", "y", "theta"];

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("baseline error vanishes for component {0}; Γ undefined")]
    DegenerateBaseline(&'static str),
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error(transparent)]
    Swimmer(#[from] SwimmerError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Fourier model of body velocity over phase.
pub fn zeroth_order_model(phases: &[f64], xi: &[BodyVelocity], order: usize) -> Result<FourierModel, MetricError> {
    let values: Vec<Vec<f64>> = xi.iter().map(|v| v.0.iter().copied().collect()).collect();
    Ok(fit_fourier(phases, &values, order)?)
}

pub fn rms_error(pred: &[BodyVelocity], truth: &[BodyVelocity]) -> Result<[f64; 3], MetricError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(MetricError::LengthMismatch);
    }
    let mut acc = [0.0; 3];
    for (p, t) in pred.iter().zip(truth) {
        for (k, a) in acc.iter_mut().enumerate() {
            *a += (p.0[k] - t.0[k]).powi(2);
        }
    }
    Ok(acc.map(|a| (a / pred.len() as f64).sqrt()))
}

/// `Γ^k = 1 − RMS(pred − truth) / RMS(baseline − truth)`.
pub fn gamma_metric(pred: &[BodyVelocity], truth: &[BodyVelocity], baseline: &[BodyVelocity]) -> Result<[f64; 3], MetricError> {
    let e = rms_error(pred, truth)?;
    let ea = rms_error(baseline, truth)?;
    let mut out = [0.0; 3];
    for k in 0..3 {
        if !(ea[k] > 0.0) {
            return Err(MetricError::DegenerateBaseline(COMPONENTS[k]));
        }
        out[k] = 1.0 - e[k] / ea[k];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub epsilon_grid: Vec<f64>,
    pub trials_per_epsilon: usize,
    pub cycles_per_trial: usize,
    pub base_seed: u64,
    pub samples_per_cycle: usize,
    /// Trailing cycles withheld from fitting and used for evaluation; zero
    /// evaluates in-sample on all cycles.
    pub holdout_cycles: usize,
    /// Fourier order of the phase models of `γ` and of the baseline `ξ_a`.
    pub phase_model_order: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilon_grid: log_grid(-3.0, 3.0, 25),
            trials_per_epsilon: 8,
            cycles_per_trial: 30,
            base_seed: 0,
            samples_per_cycle: 256,
            holdout_cycles: 0,
            phase_model_order: 7,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: &str| Err(MetricError::Config(m.to_string()));
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid is empty");
        }
        if self.epsilon_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("epsilon values must be non-negative and finite");
        }
        if self.trials_per_epsilon == 0 {
            return bad("trials_per_epsilon must be positive");
        }
        if self.cycles_per_trial < 3 {
            return bad("cycles_per_trial must be at least 3");
        }
        if self.samples_per_cycle < 16 {
            return bad("samples_per_cycle must be at least 16");
        }
        if self.holdout_cycles > 0 && self.cycles_per_trial.saturating_sub(self.holdout_cycles) < 3 {
            return bad("need at least 3 training cycles besides the held-out ones");
        }
        Ok(())
    }
}

/// `n` values evenly spaced in `log10` from `10^lo` to `10^hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect(),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial`; shared across ε so that every ε sees the same noise.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(trial as u64))
}

/// Time excluded at the start of each trial so the slow manifold is reached.
pub fn burn_in(epsilon: f64, period: f64) -> f64 {
    period.max(10.0 * epsilon)
}

/// Everything needed to run one noisy trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub swimmer: SwimmerParams,
    pub gait: Gait,
    pub noise: NoiseParams,
    pub cycles: usize,
    pub samples_per_cycle: usize,
}

impl TrialSetup {
    pub fn dt(&self) -> f64 {
        self.gait.period() / self.samples_per_cycle as f64
    }

    /// Burn-in rounded up to whole output samples.
    pub fn burn_in(&self) -> f64 {
        let dt = self.dt();
        (burn_in(self.swimmer.epsilon, self.gait.period()) / dt).ceil() * dt
    }
}

/// Simulates one trial driven by fresh noise; the returned trajectory starts
/// after the burn-in and spans `cycles` gait periods.
pub fn simulate_trial(setup: &TrialSetup) -> Result<Trajectory, MetricError> {
    let dt = setup.dt();
    let t_burn = setup.burn_in();
    let n_burn = (t_burn / dt).round() as usize;
    let n_eval = setup.cycles * setup.samples_per_cycle;
    let t_end = (n_burn + n_eval) as f64 * dt;
    let signal = noisy_shape_signal_span(&setup.gait, &setup.noise, t_end + dt, dt)?;
    let p0 = stokes_momentum(&setup.swimmer, &signal.eval(0.0))?;
    let opts = SimOptions::new(dt).record_from(t_burn - 0.5 * dt);
    let mut traj = simulate(&setup.swimmer, &signal, (0.0, t_end), &opts, GroupElement::identity(), p0)?;
    traj.samples.truncate(n_eval);
    Ok(traj)
}

/// A trajectory with phases and gait models estimated from its shape data.
#[derive(Debug, Clone)]
pub struct PhasedTrial {
    pub traj: Trajectory,
    pub phases: PhaseAssignment,
    pub gait: GaitModels,
}

pub fn phase_trial(traj: Trajectory, order: usize) -> Result<PhasedTrial, MetricError> {
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let shapes = traj.shapes();
    let phases = estimate_phase(&times, &shapes, &PhaseConfig::default())?;
    if !phases.is_monotone() {
        log::warn!("{} samples with non-increasing phase", phases.non_monotone.len());
    }
    let gait = fit_gait_models(&phases, &shapes, order, false)?;
    Ok(PhasedTrial { traj, phases, gait })
}

impl PhasedTrial {
    /// Fit data from samples with index in `range`.
    pub fn fit_data(&self, range: std::ops::Range<usize>) -> FitData {
        FitData {
            phases: self.phases.phases[range.clone()].to_vec(),
            shapes: self.traj.samples[range.clone()].iter().map(|s| s.shape.clone()).collect(),
            xi: self.traj.samples[range].iter().map(|s| s.xi).collect(),
        }
    }
}

/// Γ for both kinds on one phased trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub gamma_p: [f64; 3],
    pub gamma_s: [f64; 3],
    pub baseline_rms: [f64; 3],
}

impl TrialMetrics {
    pub fn delta(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.gamma_p[k] - self.gamma_s[k])
    }
}

pub fn predictions(model: &LocalModel, phases: &[f64], trial: &PhasedTrial, range: std::ops::Range<usize>) -> Result<Vec<BodyVelocity>, MetricError> {
    range
        .map(|i| Ok(model.predict_state(phases[i], &trial.traj.samples[i].shape)?))
        .collect()
}

/// Fits both model kinds and the baseline, then scores them.
pub fn evaluate_trial(
    trial: &PhasedTrial,
    stokes: &RegressorConfig,
    perturbed: &RegressorConfig,
    holdout_cycles: usize,
    samples_per_cycle: usize,
    baseline_order: usize,
) -> Result<(TrialMetrics, LocalModel, LocalModel), MetricError> {
    let n = trial.traj.len();
    let split = n.saturating_sub(holdout_cycles * samples_per_cycle);
    let train = 0..split;
    let eval = if holdout_cycles == 0 { 0..n } else { split..n };
    let data = trial.fit_data(train.clone());
    let model_s = fit(std::slice::from_ref(&data), &trial.gait, &RegressorConfig { kind: ModelKind::Stokes, ..stokes.clone() })?;
    let model_p = fit(std::slice::from_ref(&data), &trial.gait, &RegressorConfig { kind: ModelKind::PerturbedStokes, ..perturbed.clone() })?;
    let baseline = zeroth_order_model(&data.phases, &data.xi, baseline_order)?;
    let phases = &trial.phases.phases;
    let truth: Vec<BodyVelocity> = trial.traj.samples[eval.clone()].iter().map(|s| s.xi).collect();
    let xi_a: Vec<BodyVelocity> = eval
        .clone()
        .map(|i| {
            let v = baseline.eval(phases[i]);
            BodyVelocity::new(v[0], v[1], v[2])
        })
        .collect();
    let xi_s = predictions(&model_s, phases, trial, eval.clone())?;
    let xi_p = predictions(&model_p, phases, trial, eval)?;
    let metrics = TrialMetrics {
        gamma_p: gamma_metric(&xi_p, &truth, &xi_a)?,
        gamma_s: gamma_metric(&xi_s, &truth, &xi_a)?,
        baseline_rms: rms_error(&xi_a, &truth)?,
    };
    Ok((metrics, model_s, model_p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epsilon: f64,
    pub gait: String,
    pub trial: usize,
    pub component: String,
    pub gamma_p: f64,
    pub gamma_s: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub epsilon: f64,
    pub gait: String,
    pub trial: usize,
    pub message: String,
}

/// Per-(ε, trial) outcome before flattening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub epsilon_index: usize,
    pub epsilon: f64,
    pub trial: usize,
    pub result: Result<TrialMetrics, String>,
}

/// Runs one (ε, trial) cell of a sweep.
pub fn run_cell(
    gait: &Gait,
    swimmer: &SwimmerParams,
    noise: &NoiseParams,
    sweep: &SweepConfig,
    configs: (&RegressorConfig, &RegressorConfig),
    epsilon_index: usize,
    trial: usize,
) -> TrialOutcome {
    let epsilon = sweep.epsilon_grid[epsilon_index];
    let setup = TrialSetup {
        swimmer: swimmer.clone().with_epsilon(epsilon),
        gait: gait.clone(),
        noise: noise.clone().with_seed(trial_seed(sweep.base_seed, trial)),
        cycles: sweep.cycles_per_trial,
        samples_per_cycle: sweep.samples_per_cycle,
    };
    let result = simulate_trial(&setup)
        .and_then(|traj| phase_trial(traj, sweep.phase_model_order))
        .and_then(|pt| evaluate_trial(&pt, configs.0, configs.1, sweep.holdout_cycles, sweep.samples_per_cycle, sweep.phase_model_order))
        .map(|(m, _, _)| m)
        .map_err(|e| e.to_string());
    if let Err(e) = &result {
        log::warn!("trial {trial} at epsilon {epsilon:.4e} failed: {e}");
    }
    TrialOutcome { epsilon_index, epsilon, trial, result }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<TrialFailure>,
}

impl SweepResult {
    pub fn from_outcomes(gait_label: &str, mut outcomes: Vec<TrialOutcome>) -> Self {
        outcomes.sort_by_key(|o| (o.epsilon_index, o.trial));
        let mut out = SweepResult::default();
        for o in outcomes {
            match o.result {
                Ok(m) => {
                    let delta = m.delta();
                    for k in 0..3 {
                        out.records.push(MetricRecord {
                            epsilon: o.epsilon,
                            gait: gait_label.to_string(),
                            trial: o.trial,
                            component: COMPONENTS[k].to_string(),
                            gamma_p: m.gamma_p[k],
                            gamma_s: m.gamma_s[k],
                            delta: delta[k],
                        });
                    }
                }
                Err(message) => out.failures.push(TrialFailure { epsilon: o.epsilon, gait: gait_label.to_string(), trial: o.trial, message }),
            }
        }
        out
    }

    pub fn extend(&mut self, other: SweepResult) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

/// Full ε-sweep for one gait; cells run in parallel on the current rayon pool
/// and are merged in (ε index, trial) order.
pub fn run_sweep(
    gait_label: &str,
    gait: &Gait,
    swimmer: &SwimmerParams,
    noise: &NoiseParams,
    sweep: &SweepConfig,
    stokes: &RegressorConfig,
    perturbed: &RegressorConfig,
) -> Result<SweepResult, MetricError> {
    sweep.validate()?;
    let cells: Vec<(usize, usize)> = (0..sweep.epsilon_grid.len())
        .flat_map(|e| (0..sweep.trials_per_epsilon).map(move |t| (e, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = cells
        .par_iter()
        .map(|&(e, t)| run_cell(gait, swimmer, noise, sweep, (stokes, perturbed), e, t))
        .collect();
    Ok(SweepResult::from_outcomes(gait_label, outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub epsilon: f64,
    pub gait: String,
    pub component: String,
    pub trials: usize,
    pub gamma_p_mean: f64,
    pub gamma_p_std: f64,
    pub gamma_s_mean: f64,
    pub gamma_s_std: f64,
    pub delta_mean: f64,
    pub delta_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Mean and sample standard deviation across trials per (gait, ε, component),
/// in first-appearance order.
pub fn aggregate(records: &[MetricRecord]) -> Vec<AggregateRecord> {
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    for r in records {
        let key = (r.gait.clone(), r.epsilon.to_bits(), r.component.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(gait, eps_bits, component)| {
            let sel: Vec<&MetricRecord> = records
                .iter()
                .filter(|r| r.gait == gait && r.epsilon.to_bits() == eps_bits && r.component == component)
                .collect();
            let col = |f: fn(&MetricRecord) -> f64| mean_std(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (gp, gps) = col(|r| r.gamma_p);
            let (gs, gss) = col(|r| r.gamma_s);
            let (d, ds) = col(|r| r.delta);
            AggregateRecord {
                epsilon: f64::from_bits(eps_bits),
                gait,
                component,
                trials: sel.len(),
                gamma_p_mean: gp,
                gamma_p_std: gps,
                gamma_s_mean: gs,
                gamma_s_std: gss,
                delta_mean: d,
                delta_std: ds,
            }
        })
        .collect()
}

pub const RECORD_HEADER: &str = "epsilon,gait,trial,component,gamma_p,gamma_s,delta";
pub const AGGREGATE_HEADER: &str =
    "epsilon,gait,component,trials,gamma_p_mean,gamma_p_std,gamma_s_mean,gamma_s_std,delta_mean,delta_std";

pub fn write_records_csv<W: Write>(records: &[MetricRecord], mut w: W) -> Result<(), MetricError> {
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            format_sig17(r.epsilon),
            r.gait,
            r.trial,
            r.component,
            format_sig17(r.gamma_p),
            format_sig17(r.gamma_s),
            format_sig17(r.delta)
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRecord], mut w: W) -> Result<(), MetricError> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            format_sig17(r.epsilon),
            r.gait,
            r.component,
            r.trials,
            format_sig17(r.gamma_p_mean),
            format_sig17(r.gamma_p_std),
            format_sig17(r.gamma_s_mean),
            format_sig17(r.gamma_s_std),
            format_sig17(r.delta_mean),
            format_sig17(r.delta_std)
        )?;
    }
    Ok(())
}
