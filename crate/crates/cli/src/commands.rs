use crate::config::ExperimentConfig;
use crate::manifest::{config_hash, Manifest};
use crate::CliError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slowgait::metrics::{
    aggregate, evaluate_trial, phase_trial, run_cell, simulate_trial, trial_seed, write_aggregate_csv, write_records_csv,
    SweepResult, TrialOutcome, TrialSetup,
};
use slowgait::optimize::{gradient_step, write_log_line, GaitParameterization, GoalFunctional, LogEntry};
use slowgait::reduction::viscous_connection;
use slowgait::regression::{column_count, fit, section_phase, Block, LocalModel, ModelKind, RegressorConfig};
use slowgait::se2::GroupElement;
use slowgait::shape::{Gait, NoiseParams};
use slowgait::swimmer::{simulate, stokes_momentum, SimOptions, SwimmerParams};
use slowgait::trajectory::Trajectory;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const OPTIMIZE_LOG: &str = "optimize.jsonl";
/// Sections whose design condition number exceeds this are reported.
pub const CONDITION_WARN: f64 = 1e8;

fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg = cfg.clone().normalized();
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    Ok(cfg)
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Trajectory::read_csv(BufReader::new(file))?)
}

/// Simulates one noisy trial of the configured gait and writes its trajectory.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let cfg = prepare(cfg, out)?;
    let setup = TrialSetup {
        swimmer: cfg.swimmer.clone(),
        gait: cfg.build_gait()?,
        noise: cfg.noise.clone().with_seed(trial_seed(cfg.seed, 0)),
        cycles: cfg.simulate.cycles,
        samples_per_cycle: cfg.simulate.samples_per_cycle,
    };
    let traj = simulate_trial(&setup)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    let mut manifest = Manifest::new("simulate", &cfg);
    manifest.write_file(out, TRAJECTORY_FILE, &csv)?;
    let last = traj.samples.last().map(|s| s.g.as_vector());
    manifest.summary = serde_json::json!({
        "samples": traj.len(),
        "dt": setup.dt(),
        "burn_in": setup.burn_in(),
        "final_pose": last.map(|v| [v[0], v[1], v[2]]),
    });
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub section: usize,
    pub phase: f64,
    pub samples: usize,
    pub condition: Option<f64>,
    pub rms_residual: [f64; 3],
    pub constraint_mismatch: f64,
    /// `max |C_δ̇ + A_visc(γ)|` for Stokes models.
    pub connection_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub columns: usize,
    pub sections: Vec<SectionReport>,
    pub empty_sections: usize,
    pub ill_conditioned: usize,
}

fn model_report(model: &LocalModel, swimmer: &SwimmerParams) -> Result<ModelReport, CliError> {
    let mut sections = Vec::new();
    let mut empty = 0;
    let mut ill = 0;
    for (m, diag) in model.diagnostics.iter().enumerate() {
        let Some(diag) = diag else {
            empty += 1;
            continue;
        };
        let phase = section_phase(m, model.sections);
        let connection_mismatch = match (model.kind, model.section_block(m, Block::DeltaDot)) {
            (ModelKind::Stokes, Some(c1)) => {
                let a = viscous_connection(swimmer, &model.gait.at(phase).alpha)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                Some((c1 + a).amax())
            }
            _ => None,
        };
        if diag.condition > CONDITION_WARN {
            ill += 1;
            log::warn!("{} section {m}: condition number {:.3e}", model.kind.name(), diag.condition);
        }
        sections.push(SectionReport {
            section: m,
            phase,
            samples: diag.samples,
            condition: diag.condition.is_finite().then_some(diag.condition),
            rms_residual: diag.rms_residual,
            constraint_mismatch: diag.constraint_mismatch,
            connection_mismatch,
        });
    }
    Ok(ModelReport { kind: model.kind, columns: model.columns(), sections, empty_sections: empty, ill_conditioned: ill })
}

/// Fits both model kinds to a recorded trajectory.
pub fn cmd_fit(cfg: &ExperimentConfig, trajectory: &Path, out: &Path) -> Result<Manifest, CliError> {
    let cfg = prepare(cfg, out)?;
    let traj = read_trajectory(trajectory)?;
    let swimmer = cfg.swimmer.clone().with_segments(traj.shape_dim());
    let trial = phase_trial(traj, cfg.sweep.phase_model_order)?;
    let data = trial.fit_data(0..trial.traj.len());
    let mut manifest = Manifest::new("fit", &cfg);
    let mut reports = Vec::new();
    for rc in [&cfg.stokes, &cfg.perturbed] {
        let model = fit(std::slice::from_ref(&data), &trial.gait, rc)?;
        manifest.write_file(out, &format!("model_{}.json", rc.kind.name()), &to_json(&model)?)?;
        reports.push(model_report(&model, &swimmer)?);
    }
    manifest.write_file(out, "diagnostics.json", &to_json(&reports)?)?;
    manifest.summary = serde_json::json!({
        "samples": trial.traj.len(),
        "phase_rate": trial.gait.rate,
        "non_monotone_phase": trial.phases.non_monotone.len(),
        "columns": reports.iter().map(|r| (r.kind.name(), r.columns)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    manifest.save(out)?;
    Ok(manifest)
}

/// Scores both model kinds against the zeroth-order baseline on a trajectory.
pub fn cmd_evaluate(cfg: &ExperimentConfig, trajectory: &Path, out: &Path) -> Result<Manifest, CliError> {
    let cfg = prepare(cfg, out)?;
    let traj = read_trajectory(trajectory)?;
    let trial = phase_trial(traj, cfg.sweep.phase_model_order)?;
    let (metrics, _, _) = evaluate_trial(
        &trial,
        &cfg.stokes,
        &cfg.perturbed,
        cfg.sweep.holdout_cycles,
        cfg.simulate.samples_per_cycle,
        cfg.sweep.phase_model_order,
    )?;
    let outcome = TrialOutcome { epsilon_index: 0, epsilon: cfg.swimmer.epsilon, trial: 0, result: Ok(metrics.clone()) };
    let result = SweepResult::from_outcomes(&cfg.gait.label(), vec![outcome]);
    let mut csv = Vec::new();
    write_records_csv(&result.records, &mut csv)?;
    let mut manifest = Manifest::new("evaluate", &cfg);
    manifest.write_file(out, "metrics.json", &to_json(&metrics)?)?;
    manifest.write_file(out, "metrics.csv", &csv)?;
    manifest.summary = serde_json::json!({ "delta": metrics.delta() });
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointLine {
    gait_index: usize,
    outcome: TrialOutcome,
}

/// Reads completed cells, rewriting the file without any unreadable lines so
/// that appends start on a clean line.
fn load_checkpoint(path: &Path, hash: &str) -> Result<Vec<CheckpointLine>, CliError> {
    let header = serde_json::to_string(&CheckpointHeader { config_hash: hash.into() }).map_err(std::io::Error::other)?;
    if !path.exists() {
        std::fs::write(path, format!("{header}\n"))?;
        return Ok(Vec::new());
    }
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    match serde_json::from_str::<CheckpointHeader>(&first) {
        Ok(h) if h.config_hash == hash => {}
        Ok(_) => {
            return Err(CliError::Config(format!(
                "{} was written by a different configuration; remove it or use another output directory",
                path.display()
            )))
        }
        Err(e) => return Err(CliError::Input(format!("{}: bad header: {e}", path.display()))),
    }
    let mut done = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        match serde_json::from_str::<CheckpointLine>(&line) {
            Ok(c) => done.push(c),
            Err(e) => log::warn!("skipping unreadable checkpoint line {}: {e}", i + 2),
        }
    }
    let mut text = format!("{header}\n");
    for c in &done {
        text.push_str(&serde_json::to_string(c).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(done)
}

/// Runs the ε-sweep for every configured gait on `jobs` threads, resuming from
/// `checkpoint.jsonl` in `out` when present.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<Manifest, CliError> {
    let cfg = prepare(cfg, out)?;
    let hash = config_hash(&cfg);
    let checkpoint = out.join(CHECKPOINT_FILE);
    let mut done = load_checkpoint(&checkpoint, &hash)?;
    let finished: BTreeSet<(usize, usize, usize)> =
        done.iter().map(|c| (c.gait_index, c.outcome.epsilon_index, c.outcome.trial)).collect();
    let gaits: Vec<Gait> = cfg.sweep_gaits.iter().map(|g| g.build()).collect::<Result<_, _>>()?;
    let sweep = &cfg.sweep;
    let cells: Vec<(usize, usize, usize)> = (0..gaits.len())
        .flat_map(|g| (0..sweep.epsilon_grid.len()).flat_map(move |e| (0..sweep.trials_per_epsilon).map(move |t| (g, e, t))))
        .filter(|c| !finished.contains(c))
        .collect();
    log::info!("{} cells already done, {} to run", finished.len(), cells.len());
    let writer = Mutex::new(BufWriter::new(std::fs::OpenOptions::new().append(true).open(&checkpoint)?));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("jobs: {e}")))?;
    let computed: Vec<CheckpointLine> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(g, e, t)| -> Result<CheckpointLine, CliError> {
                let swimmer = cfg.swimmer_for(&gaits[g]);
                let outcome = run_cell(&gaits[g], &swimmer, &cfg.noise, sweep, (&cfg.stokes, &cfg.perturbed), e, t);
                let line = CheckpointLine { gait_index: g, outcome };
                let text = serde_json::to_string(&line).map_err(std::io::Error::other)?;
                let mut w = writer.lock().expect("checkpoint writer poisoned");
                writeln!(w, "{text}")?;
                w.flush()?;
                Ok(line)
            })
            .collect::<Result<_, _>>()
    })?;
    let n_computed = computed.len();
    done.extend(computed);

    let mut result = SweepResult::default();
    for (g, spec) in cfg.sweep_gaits.iter().enumerate() {
        let outcomes = done.iter().filter(|c| c.gait_index == g).map(|c| c.outcome.clone()).collect();
        result.extend(SweepResult::from_outcomes(&spec.label(), outcomes));
    }
    let mut records = Vec::new();
    write_records_csv(&result.records, &mut records)?;
    let mut agg = Vec::new();
    write_aggregate_csv(&aggregate(&result.records), &mut agg)?;
    let mut manifest = Manifest::new("sweep", &cfg);
    manifest.write_file(out, "records.csv", &records)?;
    manifest.write_file(out, "aggregate.csv", &agg)?;
    manifest.summary = serde_json::json!({
        "cells": done.len(),
        "computed": n_computed,
        "resumed": done.len() - n_computed,
        "failures": result.failures,
    });
    manifest.save(out)?;
    Ok(manifest)
}

fn regressor_for(cfg: &ExperimentConfig) -> &RegressorConfig {
    match cfg.optimize.model {
        ModelKind::Stokes => &cfg.stokes,
        ModelKind::PerturbedStokes => &cfg.perturbed,
    }
}

/// Alternates noisy trials, model fits and one gradient step on the fitted
/// model; the stepped gait drives the next trial.
pub fn cmd_optimize(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let cfg = prepare(cfg, out)?;
    let goal: GoalFunctional = cfg.optimize.goal.parse()?;
    let mut gait = cfg.build_gait()?;
    let mut log = Vec::new();
    let mut entries = Vec::new();
    for iteration in 0..cfg.optimize.iterations {
        let setup = TrialSetup {
            swimmer: cfg.swimmer_for(&gait),
            gait: gait.clone(),
            noise: cfg.noise.clone().with_seed(trial_seed(cfg.seed, iteration)),
            cycles: cfg.simulate.cycles,
            samples_per_cycle: cfg.simulate.samples_per_cycle,
        };
        let trial = phase_trial(simulate_trial(&setup)?, cfg.sweep.phase_model_order)?;
        let data = trial.fit_data(0..trial.traj.len());
        let model = fit(std::slice::from_ref(&data), &trial.gait, regressor_for(&cfg))?;
        let param = GaitParameterization::from_gait(&model.gait, cfg.optimize.alpha_max);
        let step = gradient_step(&model, &param, &vec![0.0; param.dim()], &goal, cfg.optimize.alpha)?;
        let entry = LogEntry::from_step(iteration, &step);
        write_log_line(&mut log, &entry)?;
        log::info!("iteration {iteration}: goal {:.6e} -> {:.6e}", step.goal_before, step.goal_after);
        entries.push(entry);
        if step.extremal {
            log::info!("gradient vanished; stopping");
            break;
        }
        gait = Gait::new(param.series(&step.p)?);
    }
    let mut manifest = Manifest::new("optimize", &cfg);
    manifest.write_file(out, OPTIMIZE_LOG, &log)?;
    manifest.write_file(out, "gait_final.json", &to_json(&gait)?)?;
    manifest.summary = serde_json::json!({
        "goal": goal.name(),
        "iterations": entries.len(),
        "extremal": entries.last().is_some_and(|e| e.extremal),
        "goal_first": entries.first().map(|e| e.goal_before),
        "goal_last": entries.last().map(|e| e.goal_after),
    });
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn short_run(params: &SwimmerParams, gait: &Gait, seed: u64) -> Result<Trajectory, CliError> {
    let setup = TrialSetup { swimmer: params.clone(), gait: gait.clone(), noise: NoiseParams::default().with_seed(seed), cycles: 2, samples_per_cycle: 64 };
    Ok(simulate_trial(&setup)?)
}

/// Quick internal consistency checks; fails with a numerical error if any does.
pub fn cmd_selftest() -> Result<Vec<SelfTestCheck>, CliError> {
    let cfg = ExperimentConfig::default();
    let gait = cfg.build_gait()?;
    let mut checks = Vec::new();

    let a = short_run(&cfg.swimmer, &gait, 11)?;
    let b = short_run(&cfg.swimmer, &gait, 11)?;
    checks.push(SelfTestCheck { name: "deterministic simulation".into(), pass: a == b, detail: format!("{} samples", a.len()) });

    let params = cfg.swimmer.clone().with_epsilon(0.0);
    let stokes = simulate(&params, &gait, (0.0, 1.0), &SimOptions::new(0.05), GroupElement::identity(), Default::default())?;
    let p_eps = cfg.swimmer.clone().with_epsilon(1e-3);
    let p0 = stokes_momentum(&p_eps, &gait.at_phase(0.0))?;
    let near = simulate(&p_eps, &gait, (0.0, 1.0), &SimOptions::new(0.05), GroupElement::identity(), p0)?;
    let err = stokes
        .samples
        .iter()
        .zip(&near.samples)
        .map(|(s, n)| (s.xi.0 - n.xi.0).amax())
        .fold(0.0, f64::max);
    checks.push(SelfTestCheck { name: "small-epsilon limit".into(), pass: err < 1e-2, detail: format!("max |xi - xi_stokes| {err:.2e}") });

    let counts = [2, 4, 6].map(|d| (column_count(ModelKind::Stokes, d, false), column_count(ModelKind::PerturbedStokes, d, false)));
    let expected = [2, 4, 6].map(|d| (1 + 2 * d + d * d, 1 + 3 * d + 3 * d * d));
    checks.push(SelfTestCheck { name: "regressor columns".into(), pass: counts == expected, detail: format!("{counts:?}") });

    for c in &checks {
        log::info!("{}: {} ({})", c.name, if c.pass { "ok" } else { "FAILED" }, c.detail);
    }
    if let Some(bad) = checks.iter().find(|c| !c.pass) {
        return Err(CliError::Numerical(format!("selftest {} failed: {}", bad.name, bad.detail)));
    }
    Ok(checks)
}
