use clap::{Parser, Subcommand};
use slowgait_cli::{cmd_evaluate, cmd_fit, cmd_optimize, cmd_selftest, cmd_simulate, cmd_sweep, CliError, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "slowgait", version, about = "Data-driven local models of swimmer locomotion")]
struct Cli {
    /// TOML experiment configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps; all cores when omitted.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one noisy trial and write trajectory.csv.
    Simulate,
    /// Fit Stokes and perturbed-Stokes models to a trajectory.
    Fit { trajectory: PathBuf },
    /// Score both models against the zeroth-order baseline.
    Evaluate { trajectory: PathBuf },
    /// Run the epsilon sweep for every configured gait.
    Sweep,
    /// Iterate simulate, fit and gradient step on the gait.
    Optimize,
    /// Run quick internal consistency checks.
    Selftest,
    /// Print the default configuration as TOML.
    Defaults,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let out = cfg.output_dir.clone();
    let manifest = match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out)?,
        Command::Fit { trajectory } => cmd_fit(&cfg, &trajectory, &out)?,
        Command::Evaluate { trajectory } => cmd_evaluate(&cfg, &trajectory, &out)?,
        Command::Sweep => cmd_sweep(&cfg, &out, cli.jobs)?,
        Command::Optimize => cmd_optimize(&cfg, &out)?,
        Command::Selftest => {
            for c in cmd_selftest()? {
                println!("ok  {} ({})", c.name, c.detail);
            }
            return Ok(());
        }
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_toml());
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string_pretty(&manifest.summary).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
