//! Command-line front end of the variational N-body toolkit.
//!
//! Subcommands: `phi` (action potentials), `synthesize` (hyperbolic
//! motions with prescribed limit shape), `classify` (final evolutions),
//! `scatter` (perihelia-section scans of the limit shape map) and
//! `busemann` (directed horofunction tables). Every run reads a flat
//! `key = value` configuration file and writes its outputs plus a
//! manifest with content digests into the output directory.
//!
//! Exit codes: 0 success, 2 numerical search failure, 3 non-convergence,
//! 64 usage or configuration error.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use commands::{Ctx, EXIT_USAGE};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hypermotion", version, about = "Variational N-body toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (flat key = value records).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: $HYPERMOTION_OUT or the working dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for every randomized procedure.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for batch commands.
    #[arg(long, global = true, default_value_t = 2)]
    workers: usize,

    /// Integration tolerance override.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-time or free-time action potential between configurations.
    Phi,
    /// Hyperbolic motion with prescribed limit shape, energy and start.
    Synthesize,
    /// Final-evolution classification of an initial condition.
    Classify,
    /// Perihelia-section scan of the limit shape map.
    Scatter,
    /// Directed horofunction (Busemann) table over probe points.
    Busemann,
}

fn main() {
    let cli = Cli::parse();
    let Some(config_path) = cli.config else {
        eprintln!("error: --config PATH is required");
        std::process::exit(EXIT_USAGE);
    };
    let config = match config::Config::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(EXIT_USAGE);
        }
    };
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("HYPERMOTION_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        std::process::exit(EXIT_USAGE);
    }
    let ctx = Ctx {
        config: &config,
        out_dir: &out_dir,
        seed: cli.seed,
        workers: cli.workers,
        tol: cli.tol,
    };
    let code = match cli.command {
        Command::Phi => commands::cmd_phi(&ctx),
        Command::Synthesize => commands::cmd_synthesize(&ctx),
        Command::Classify => commands::cmd_classify(&ctx),
        Command::Scatter => commands::cmd_scatter(&ctx),
        Command::Busemann => commands::cmd_busemann(&ctx),
    };
    std::process::exit(code);
}
