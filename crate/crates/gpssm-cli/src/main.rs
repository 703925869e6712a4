//! Command-line runner for closed-loop system-identification experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;

use gpssm::harness::{emit_experiment_csvs, emit_mi_landscape, run_experiment, ExperimentConfig};
use gpssm::systems::{SystemKind, SystemSpec};

#[derive(Parser)]
#[command(name = "gpssm", version, about = "Active learning of GP state-space models on simulated systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-trial exploration experiment from a config file.
    Run {
        /// Flat key-value experiment config (see `systems` docs for keys).
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for aggregate.csv, per-trial session CSVs and the
        /// config snapshot.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Override the number of independent trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the number of exploration steps per trial.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Snapshot the total-MI landscape over the control grid at chosen
    /// training-set sizes during one exploration session.
    Landscape {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Training-set sizes at which to record the landscape.
        #[arg(long, value_delimiter = ',', default_value = "9,18,27,36")]
        snapshots: Vec<usize>,
        /// Grid points per control dimension.
        #[arg(long, default_value_t = 50)]
        grid: usize,
    },
    /// Roll a simulator forward under uniformly random controls.
    Simulate {
        /// kink | pendulum | cartpole | tras
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Optional key-value file overriding dynamics parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the fast invariant self-checks and report pass/fail lines.
    Check,
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::parse(&text)?)
}

fn cmd_run(
    config: PathBuf,
    seed: Option<u64>,
    out_dir: PathBuf,
    trials: Option<usize>,
    steps: Option<usize>,
) -> Result<bool> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
    if let Some(steps) = steps {
        cfg.steps = steps;
    }
    eprintln!(
        "running {} with {:?} over {} trials x {} steps (seed {})",
        cfg.system.name(),
        cfg.criteria.iter().map(|c| c.name()).collect::<Vec<_>>(),
        cfg.trials,
        cfg.steps,
        cfg.seed
    );
    let output = run_experiment(&cfg)?;
    emit_experiment_csvs(&output, &out_dir)?;
    for row in output.aggregate.rows.iter().filter(|r| r.step + 1 == cfg.steps) {
        eprintln!(
            "{:>8}  final rmse {:.5} +- {:.5}  mean step {:.3}s",
            row.criterion.name(),
            row.mean_rmse,
            row.std_rmse,
            row.mean_seconds
        );
    }
    eprintln!("wrote {}", out_dir.display());
    if !output.all_completed {
        eprintln!("warning: some sessions aborted; partial results are flagged in the CSVs");
    }
    Ok(output.all_completed)
}

fn cmd_landscape(
    config: PathBuf,
    seed: Option<u64>,
    out_dir: PathBuf,
    snapshots: Vec<usize>,
    grid: usize,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let max = snapshots.iter().copied().max().unwrap_or(0);
    cfg.steps = max.saturating_sub(cfg.initial_points);
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("landscape.csv");
    emit_mi_landscape(&cfg, &snapshots, grid, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(
    system: String,
    steps: usize,
    seed: u64,
    out_dir: PathBuf,
    params: Option<PathBuf>,
) -> Result<()> {
    let mut spec = SystemSpec::by_kind(SystemKind::parse(&system)?);
    if let Some(path) = params {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        spec.apply_params_text(&text)?;
    }
    let mut control_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut obs_rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut state = spec.init_state.clone();
    let state_cols: Vec<String> = (0..spec.d_x).map(|i| format!("x_{i}")).collect();
    let control_cols: Vec<String> = (0..spec.d_c).map(|i| format!("c_{i}")).collect();
    let obs_cols: Vec<String> = (0..spec.d_y).map(|i| format!("y_{i}")).collect();
    let mut out = format!("step,{},{},{}\n", state_cols.join(","), control_cols.join(","), obs_cols.join(","));
    for step in 0..steps {
        let control = spec.control_box.sample(&mut control_rng);
        state = spec.step(&state, &control)?;
        let obs = spec.observe(&state, &mut obs_rng);
        let fields: Vec<String> = state
            .iter()
            .map(|v| format!("{v:?}"))
            .chain(control.iter().map(|v| format!("{v:?}")))
            .chain(obs.iter().map(|v| format!("{v:?}")))
            .collect();
        out.push_str(&format!("{},{}\n", step, fields.join(",")));
    }
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join(format!("simulate_{}.csv", spec.kind.name()));
    std::fs::write(&path, out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_check() -> bool {
    let results = gpssm::harness::self_check();
    let mut all_ok = true;
    for (name, ok, detail) in &results {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    }
    all_ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, seed, out_dir, trials, steps } => {
            cmd_run(config, seed, out_dir, trials, steps)
        }
        Command::Landscape { config, seed, out_dir, snapshots, grid } => {
            cmd_landscape(config, seed, out_dir, snapshots, grid).map(|()| true)
        }
        Command::Simulate { system, steps, seed, out_dir, params } => {
            cmd_simulate(system, steps, seed, out_dir, params).map(|()| true)
        }
        Command::Check => Ok(cmd_check()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
