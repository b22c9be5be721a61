use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use satnls::experiment::{self, Mode, RunOptions};

/// Saturable NLS solver suite: ground states, CNFD and split-step runs,
/// convergence tables and manufactured-solution studies.
#[derive(Parser, Debug)]
#[command(name = "satnls", version)]
struct Cli {
    /// groundstate | evolve-cnfd | evolve-ssfm | compare | convergence-table | mms-study
    mode: Mode,
    /// TOML configuration; omitted sections take the reference-run defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Finest mesh size of the refinement ladder to run.
    #[arg(long)]
    ladder_max_h: Option<f64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Allow ladder rungs finer than h = 2^-4.
    #[arg(long)]
    allow_large: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(path) => experiment::load_config(path, Some(cli.mode))?,
        None => experiment::parse_config("", Some(cli.mode))?,
    };
    let opts = RunOptions { out_dir: cli.out.clone(), ladder_max_h: cli.ladder_max_h, allow_large: cli.allow_large };
    let outcome = experiment::run_experiment(&cfg, &opts)
        .with_context(|| format!("{} run failed (partial artifacts in {})", cli.mode, cli.out.display()))?;
    print!("{}", outcome.summary);
    log::info!("{} files written to {}", outcome.files.len(), cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
