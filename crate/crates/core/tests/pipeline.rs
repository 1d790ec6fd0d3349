use slowgait::metrics::{evaluate_trial, phase_trial, simulate_trial, trial_seed, TrialSetup};
use slowgait::optimize::{goal_eval, GaitParameterization, GoalFunctional};
use slowgait::regression::{fit, ModelKind, RegressorConfig};
use slowgait::shape::{manual_gait, GaitKind, NoiseParams};
use slowgait::swimmer::{simulate, stokes_momentum, SimOptions, SwimmerParams};
use slowgait::GroupElement;
use std::f64::consts::TAU;

fn setup(kind: GaitKind, epsilon: f64, seed: u64) -> TrialSetup {
    TrialSetup {
        swimmer: SwimmerParams::default().with_epsilon(epsilon),
        gait: manual_gait(kind, 1.0),
        noise: NoiseParams::default().with_seed(seed),
        cycles: 30,
        samples_per_cycle: 256,
    }
}

/// Integral of body-frame lateral velocity over one settled, noise-free cycle.
fn simulated_lateral_integral(epsilon: f64) -> f64 {
    let params = SwimmerParams::default().with_epsilon(epsilon);
    let gait = manual_gait(GaitKind::Circle, 1.0);
    let n = 1024;
    let dt = TAU / n as f64;
    let p0 = stokes_momentum(&params, &gait.at_phase(0.0)).unwrap();
    let opts = SimOptions::new(dt).record_from(3.0 * TAU - 0.5 * dt);
    let traj = simulate(&params, &gait, (0.0, 4.0 * TAU), &opts, GroupElement::identity(), p0).unwrap();
    let y: Vec<f64> = traj.samples.iter().map(|s| s.xi.y()).collect();
    assert_eq!(y.len(), n + 1);
    y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum()
}

#[test]
fn model_goal_matches_simulated_goal() {
    let epsilon = 0.1;
    let trial = phase_trial(simulate_trial(&setup(GaitKind::Circle, epsilon, 3)).unwrap(), 7).unwrap();
    let data = trial.fit_data(0..trial.traj.len());
    let model = fit(std::slice::from_ref(&data), &trial.gait, &RegressorConfig::of_kind(ModelKind::PerturbedStokes)).unwrap();
    let param = GaitParameterization::from_gait(&model.gait, 0.5);
    let predicted = goal_eval(&model, &param, &vec![0.0; param.dim()], &GoalFunctional::BodyY).unwrap();
    let simulated = simulated_lateral_integral(epsilon);
    assert_eq!(predicted.outside_tube, 0);
    let rel = (predicted.value - simulated).abs() / simulated.abs();
    assert!(rel < 0.05, "model {:.5e} vs simulation {simulated:.5e} ({rel:.3})", predicted.value);
}

#[test]
fn held_out_cycles_beat_the_baseline() {
    let trial = phase_trial(simulate_trial(&setup(GaitKind::SymmetricFlap, 1.0, 9)).unwrap(), 7).unwrap();
    let cfg_s = RegressorConfig::of_kind(ModelKind::Stokes);
    let cfg_p = RegressorConfig::of_kind(ModelKind::PerturbedStokes);
    let (m, _, _) = evaluate_trial(&trial, &cfg_s, &cfg_p, 10, 256, 7).unwrap();
    for k in 0..3 {
        assert!(m.gamma_p[k] > 0.0 && m.gamma_s[k] > 0.0, "{m:?}");
    }
}

#[test]
fn inertial_terms_help_the_twist_gait() {
    let cfg_s = RegressorConfig::of_kind(ModelKind::Stokes);
    let cfg_p = RegressorConfig::of_kind(ModelKind::PerturbedStokes);
    let trials = 4;
    let mut mean = [0.0; 3];
    for t in 0..trials {
        let trial = phase_trial(simulate_trial(&setup(GaitKind::TwistInPlace, 1.0, trial_seed(77, t))).unwrap(), 7).unwrap();
        let (m, _, _) = evaluate_trial(&trial, &cfg_s, &cfg_p, 0, 256, 7).unwrap();
        for (acc, d) in mean.iter_mut().zip(m.delta()) {
            *acc += d / trials as f64;
        }
    }
    assert!(mean.iter().all(|&d| d > 0.0), "{mean:?}");
}
