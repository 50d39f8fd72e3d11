//! `ug`: run uncertainty-guided search, sampling and grounding over a
//! manifest, generate synthetic benchmarks, and sweep zoom correlations.

mod config;
mod correlate;
mod error;
mod run;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ug_core::eval::Task;

use config::{BackendKind, RunConfig};
use error::{CliError, EXIT_CODES};

#[derive(Parser)]
#[command(name = "ug", version, about, after_help = EXIT_CODES)]
struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `ug_core=debug`.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer image MCQ items from the least uncertain crops.
    Search(RunArgs),
    /// Answer video MCQ items from the least uncertain frames.
    Sample(RunArgs),
    /// Localize events with the maximum-sum run of window confidences.
    Ground(RunArgs),
    /// Write a synthetic benchmark with oracle sidecars.
    Synth(SynthArgs),
    /// Sweep zoom ratios with the oracle and correlate entropy with zoom and accuracy.
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    items_in_flight: Option<usize>,
    /// Backend failures tolerated before the run is abandoned.
    #[arg(long)]
    max_backend_failures: Option<usize>,
    #[arg(long)]
    scorer_model: Option<String>,
    #[arg(long)]
    answerer_model: Option<String>,
    /// Replace an existing run in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of image search items.
    #[arg(long)]
    search: Option<usize>,
    /// Number of grounding videos.
    #[arg(long)]
    ground: Option<usize>,
    /// Number of frame-sampling videos.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// First scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// Comma-separated crop ratios in (0, 1].
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    force: bool,
}

fn apply_run_args(cfg: &mut RunConfig, a: RunArgs) -> bool {
    if a.manifest.is_some() {
        cfg.io.manifest = a.manifest;
    }
    if a.out.is_some() {
        cfg.io.out = a.out;
    }
    if let Some(b) = a.backend {
        cfg.backend = b;
    }
    if let Some(n) = a.items_in_flight {
        cfg.io.items_in_flight = n;
    }
    if let Some(n) = a.max_backend_failures {
        cfg.io.max_backend_failures = n;
    }
    if let Some(m) = a.answerer_model {
        let mut answerer = cfg.answerer.clone().unwrap_or_else(|| cfg.scorer.clone());
        answerer.model_id = m;
        cfg.answerer = Some(answerer);
    }
    if let Some(m) = a.scorer_model {
        cfg.scorer.model_id = m;
    }
    a.force
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(level) = cli.log_level {
        cfg.log_level = level;
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cfg.log_level))
        .try_init()
        .ok();
    match cli.command {
        Command::Search(a) => {
            let force = apply_run_args(&mut cfg, a);
            run::cmd_run(Task::McqImage, &cfg, force).map(drop)
        }
        Command::Sample(a) => {
            let force = apply_run_args(&mut cfg, a);
            run::cmd_run(Task::McqVideo, &cfg, force).map(drop)
        }
        Command::Ground(a) => {
            let force = apply_run_args(&mut cfg, a);
            run::cmd_run(Task::Grounding, &cfg, force).map(drop)
        }
        Command::Synth(a) => {
            if a.out.is_some() {
                cfg.io.out = a.out;
            }
            if a.seed.is_some() {
                cfg.io.seed = a.seed;
            }
            if let Some(n) = a.search {
                cfg.synth.search_items = n;
            }
            if let Some(n) = a.ground {
                cfg.synth.ground_items = n;
            }
            if let Some(n) = a.sample {
                cfg.synth.sample_items = n;
            }
            synth::cmd_synth(&cfg, a.force).map(drop)
        }
        Command::Correlate(a) => {
            if a.out.is_some() {
                cfg.io.out = a.out;
            }
            if a.seed.is_some() {
                cfg.io.seed = a.seed;
            }
            if let Some(n) = a.seeds {
                cfg.correlate.seeds = n;
            }
            if let Some(r) = a.ratios {
                cfg.correlate.ratios = r;
            }
            correlate::cmd_correlate(&cfg, a.force)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ug: {e}");
            e.exit_code()
        }
    }
}
