//! `boostdepth`: scene synthesis, depth optimization, drift simulation and
//! evaluation as one binary with subcommands, driven by a `key = value`
//! configuration file plus a few flags. Exit codes: 0 success, 2
//! configuration error, 3 data or I/O error, 4 numeric failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{apply_preset, parse_config, ExperimentConfig, Preset};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "boostdepth", version, about = "Photometric depth optimization experiments")]
struct Cli {
    /// Configuration file of key = value lines; merges over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for the command's artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the seed from the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Named starting point: md2, warmup, full or pre.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// After optimizing, write the final per-pixel error and keep-mask PFMs.
    #[arg(long, global = true)]
    dump_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene directory.
    Synth,
    /// Optimize depth against a rendered scene.
    Optimize {
        /// Scene directory produced by synth.
        scene: PathBuf,
    },
    /// Compare predicted depth maps against a scene's ground truth.
    Eval {
        /// Directory of depth_NNNN.pfm predictions.
        pred: PathBuf,
        /// Ground-truth scene directory.
        gt: PathBuf,
    },
    /// Tabulate direct vs incremental pose error growth.
    Posesim,
}

fn load_config(cli: &Cli) -> boostdepth_core::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(name) = &cli.preset {
        apply_preset(&mut cfg, name.parse::<Preset>()?);
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        cfg = parse_config(&text, &cfg)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> boostdepth_core::Result<&PathBuf> {
    cli.out.as_ref().ok_or_else(|| boostdepth_core::Error::config("--out is required"))
}

fn dispatch(cli: &Cli) -> boostdepth_core::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(boostdepth_core::Error::config("--threads must be at least 1"));
        }
        // Ignore the error when a pool already exists; tests call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => commands::cmd_synth(&cfg, out_dir(cli)?),
        Command::Optimize { scene } => {
            commands::cmd_optimize(&cfg, scene, out_dir(cli)?, cli.dump_errors)
        }
        Command::Eval { pred, gt } => commands::cmd_eval(&cfg, pred, gt, out_dir(cli)?),
        Command::Posesim => commands::cmd_posesim(&cfg, out_dir(cli)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
