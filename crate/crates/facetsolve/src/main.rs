use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use facetsolve::{run, Command};

#[derive(Parser)]
#[command(name = "facetsolve", version, about = "Regularized solves and estimate diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Continuation solve; writes fields, levels and a summary.
    Solve(Common),
    /// Inequality battery, diagnostics, minimality, stability and Lipschitz sweep.
    Verify(Common),
    /// One table row per (n, amplitude, eps) run.
    Sweep(Common),
    /// Solve plus the Moser and De Giorgi tables.
    Report(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let threads = std::env::var("FACETSOLVE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("cannot size the thread pool: {e}");
        }
    }
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    ExitCode::from(run(cmd, &c.config, c.out.as_deref(), c.seed).code())
}
