use criterion::{criterion_group, criterion_main, Criterion};
use slowgait::metrics::{phase_trial, simulate_trial, TrialSetup};
use slowgait::regression::{fit, ModelKind, RegressorConfig};
use slowgait::reduction::perturbation_terms;
use slowgait::shape::{manual_gait, GaitKind, NoiseParams};
use slowgait::swimmer::{simulate, stokes_connection, stokes_momentum, SimOptions, SwimmerParams};
use slowgait::GroupElement;
use std::hint::black_box;

fn connection(c: &mut Criterion) {
    let params = SwimmerParams::default();
    let r = [1.2, -0.7];
    c.bench_function("stokes_connection", |b| b.iter(|| stokes_connection(&params, black_box(&r)).unwrap()));
    c.bench_function("perturbation_terms", |b| b.iter(|| perturbation_terms(&params, black_box(&r)).unwrap()));
}

fn integrate(c: &mut Criterion) {
    let gait = manual_gait(GaitKind::Circle, 1.0);
    let mut group = c.benchmark_group("simulate_one_period");
    for eps in [0.1, 1.0] {
        let params = SwimmerParams::default().with_epsilon(eps);
        let p0 = stokes_momentum(&params, &gait.at_phase(0.0)).unwrap();
        let opts = SimOptions::new(std::f64::consts::TAU / 256.0);
        group.bench_function(format!("eps_{eps}"), |b| {
            b.iter(|| simulate(&params, &gait, (0.0, std::f64::consts::TAU), &opts, GroupElement::identity(), p0).unwrap())
        });
    }
    group.finish();
}

fn regression(c: &mut Criterion) {
    let setup = TrialSetup {
        swimmer: SwimmerParams::default().with_epsilon(1.0),
        gait: manual_gait(GaitKind::SymmetricFlap, 1.0),
        noise: NoiseParams::default().with_seed(3),
        cycles: 30,
        samples_per_cycle: 256,
    };
    let trial = phase_trial(simulate_trial(&setup).unwrap(), 7).unwrap();
    let data = trial.fit_data(0..trial.traj.len());
    let mut group = c.benchmark_group("fit");
    group.sample_size(20);
    for kind in [ModelKind::Stokes, ModelKind::PerturbedStokes] {
        let cfg = RegressorConfig::of_kind(kind);
        group.bench_function(kind.name(), |b| {
            b.iter(|| fit(std::slice::from_ref(&data), &trial.gait, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, connection, integrate, regression);
criterion_main!(benches);
