use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lase_core::config::{preset, preset_names, RunConfig, RunFile};
use lase_core::envs::EnvKind;
use lase_core::experiment::{evaluate_run, run_training, EvalOptions};
use lase_core::matrix_dynamics::{sweep_heatmap, DynamicsConfig, GridSpec};
use lase_core::schelling::{schelling_diagram, verify_ssd};

#[derive(Parser)]
#[command(name = "lase", version, about = "Empathic reward gifting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form two-player learning dynamics over a (T, S) grid, as CSV.
    MatrixSweep(SweepArgs),
    /// Train a roster and write a run directory.
    Train(TrainArgs),
    /// Estimate a Schelling diagram from scripted groups, as CSV.
    Schelling(SchellingArgs),
    /// Play saved agents without learning and print a JSON report.
    Eval(EvalArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    t_step: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    s_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    s_max: f64,
    #[arg(long, default_value_t = 0.1)]
    s_step: f64,
    /// Random initial policies per cell.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Built-in preset (see `lase presets`).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML run file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Run directory; defaults to runs/<name>-seed<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SchellingArgs {
    #[arg(long)]
    env: EnvKind,
    /// Episodes per cooperator count.
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Agents checkpoint; defaults to the run's final agents.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Infer co-player policies from their true observations.
    #[arg(long)]
    real_observations: bool,
    /// JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MatrixSweep(a) => matrix_sweep(a),
        Command::Train(a) => train(a),
        Command::Schelling(a) => schelling(a),
        Command::Eval(a) => eval(a),
        Command::Presets => {
            preset_names().iter().for_each(|n| println!("{n}"));
            Ok(())
        }
    }
}

fn matrix_sweep(a: SweepArgs) -> Result<()> {
    let config = DynamicsConfig { alpha: a.alpha, gamma: a.gamma, max_iters: a.max_iters, rng_seed: a.seed, ..Default::default() };
    let heatmap = sweep_heatmap(
        &GridSpec::new(a.t_min, a.t_max, a.t_step),
        &GridSpec::new(a.s_min, a.s_max, a.s_step),
        a.seeds,
        &config,
    )?;
    write_out(Some(&a.out), &heatmap.to_csv())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut run: RunConfig = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => RunFile::load(path)?.resolve()?,
        (None, None) => bail!("either --preset or --config is required"),
    };
    if let Some(seed) = a.seed {
        run.seed = seed;
    }
    if let Some(episodes) = a.episodes {
        run.episodes = episodes;
    }
    let dir = a.out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-seed{}", run.name, run.seed)));
    let summary = run_training(&run, &dir).with_context(|| format!("training into {}", dir.display()))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("run written to {}", dir.display());
    Ok(())
}

fn schelling(a: SchellingArgs) -> Result<()> {
    let curve = schelling_diagram(a.env, a.episodes, a.seed)?;
    let report = verify_ssd(&curve)?;
    write_out(a.out.as_deref(), &curve.to_csv())?;
    eprintln!(
        "{}: mutual cooperation preferred {}, cooperation beats exploitation {}, fear {}, greed {}",
        a.env,
        report.mutual_cooperation_preferred,
        report.cooperation_beats_exploitation,
        report.fear,
        report.greed
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let options = EvalOptions { episodes: a.episodes, epsilon: a.epsilon, real_observations: a.real_observations };
    let report = evaluate_run(&a.run, a.checkpoint.as_deref(), &options)?;
    write_out(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
