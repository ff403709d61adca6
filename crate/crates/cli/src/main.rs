use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fieldroad::harness::{self, ExperimentConfig, ExperimentKind};

#[derive(Debug, Parser)]
#[command(name = "fieldroad", version, about = "Particle simulations and PDE checks for the field-road system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trajectories and record test-function pairings.
    Simulate(Common),
    /// Verify the finite-volume solver.
    Pde(Common),
    /// Compare particle densities against the PDE as N grows.
    Converge(Common),
    /// Compare the simulator with the exact forward law on a tiny lattice.
    Oracle(Common),
    /// Check the Dirichlet-form identities and the entropy bound.
    DirichletCheck(Common),
    /// Martingale, quadratic-variation, replacement and energy diagnostics.
    Diagnostics(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: config `output_dir`, else `out`].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: one per core].
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(&self) -> (ExperimentKind, &Common) {
        match self {
            Command::Simulate(c) => (ExperimentKind::Simulate, c),
            Command::Pde(c) => (ExperimentKind::Pde, c),
            Command::Converge(c) => (ExperimentKind::Converge, c),
            Command::Oracle(c) => (ExperimentKind::Oracle, c),
            Command::DirichletCheck(c) => (ExperimentKind::DirichletCheck, c),
            Command::Diagnostics(c) => (ExperimentKind::Diagnostics, c),
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let (kind, opts) = cli.command.split();
    let mut cfg = ExperimentConfig::from_file(&opts.config)
        .with_context(|| format!("loading config {}", opts.config.display()))?;
    if let Some(k) = cfg.kind {
        if k != kind {
            anyhow::bail!("config is for `{}` but the subcommand is `{}`", k.name(), kind.name());
        }
    }
    cfg.kind = Some(kind);
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.workers.is_some() {
        cfg.workers = opts.workers;
    }
    cfg.validate()?;
    let out = opts.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let emitted = harness::run(kind, &cfg).with_context(|| format!("running {}", kind.name()))?;
    let paths = emitted.write(&out).with_context(|| format!("writing results to {}", out.display()))?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    println!(
        "{} config={} result={}",
        kind.name(),
        &emitted.config_hash[..12],
        if emitted.passed { "PASS" } else { "FAIL" }
    );
    Ok(emitted.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
