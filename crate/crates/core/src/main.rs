use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platoon_koopman::commands::{
    cmd_eval, cmd_phase_plane, cmd_rollout, cmd_simulate, cmd_stability, cmd_train,
};
use platoon_koopman::config::RunConfig;
use platoon_koopman::Error;

#[derive(Parser)]
#[command(name = "platoon-koopman", version, about = "Koopman models of vehicle-platoon dynamics")]
struct Cli {
    /// TOML run configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus, split and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic trajectory corpus.
    Simulate,
    /// Train the Koopman model and the DMDc baseline.
    Train,
    /// Compare Koopman, DMDc and IDM on the test split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dmdc: Option<PathBuf>,
    },
    /// Regenerate trajectories from initial states and leader accelerations.
    Rollout {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Trajectory id; defaults to every test sequence.
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Local and string stability of a saved model.
    Stability {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Export phase-plane points for one sequence.
    PhasePlane {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<String, Error> {
    let mut cfg = match &cli.config {
        Some(path) if !path.is_file() => return Err(Error::Config(format!("{} not found", path.display()))),
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval { model, dmdc } => cmd_eval(&cfg, model.as_deref(), dmdc.as_deref()),
        Command::Rollout { model, sequence } => cmd_rollout(&cfg, model.as_deref(), sequence.as_deref()),
        Command::Stability { model } => cmd_stability(&cfg, model.as_deref()),
        Command::PhasePlane { model, sequence, horizon } => {
            cmd_phase_plane(&cfg, model.as_deref(), sequence.as_deref(), *horizon)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
