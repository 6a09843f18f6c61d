use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

mod config;
mod run;

use config::RunConfig;
use run::Runner;

/// Limiting-absorption solver for periodic waveguides.
#[derive(Parser)]
#[command(name = "lapwg", version)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines, optional `[section]` blocks).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Mode {
    /// Dispersion diagram, stop bands and crossings at k2.
    Dispersion(Common),
    /// Singularity indicator on a polar grid.
    Scan(Common),
    /// Integration contour with its validation report.
    Contour(Common),
    /// LAP solution on the requested cells.
    SolveFull(Common),
    /// Half-guide solution from Dirichlet data on the right cell edge.
    SolveHalf(Common),
    /// Absorbing truncated-strip solves extrapolated to zero absorption.
    Oracle(Common),
    /// Error table over node counts and mesh sizes.
    Convergence(Common),
}

fn run(mode: Mode) -> Result<()> {
    let (name, common) = match &mode {
        Mode::Dispersion(c) => ("dispersion", c),
        Mode::Scan(c) => ("scan", c),
        Mode::Contour(c) => ("contour", c),
        Mode::SolveFull(c) => ("solve-full", c),
        Mode::SolveHalf(c) => ("solve-half", c),
        Mode::Oracle(c) => ("oracle", c),
        Mode::Convergence(c) => ("convergence", c),
    };
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("cannot read config {}", common.config.display()))?;
    if RunConfig::is_blank(&text) {
        let mut cmd = Cli::command();
        cmd.build();
        let sub = cmd.find_subcommand_mut(name).expect("known subcommand");
        anyhow::bail!("config {} is empty\n\n{}", common.config.display(), sub.render_usage());
    }
    let base = common.config.parent().unwrap_or(std::path::Path::new("."));
    let config = RunConfig::parse(&text, base).with_context(|| format!("in config {}", common.config.display()))?;
    let runner = Runner::new(config, common.out.clone(), name)?;
    match mode {
        Mode::Dispersion(_) => runner.dispersion(),
        Mode::Scan(_) => runner.scan(),
        Mode::Contour(_) => runner.contour_mode(),
        Mode::SolveFull(_) => runner.solve_full(),
        Mode::SolveHalf(_) => runner.solve_half(),
        Mode::Oracle(_) => runner.oracle(),
        Mode::Convergence(_) => runner.convergence(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.mode) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
