use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use robust_mimo::bench::{
    run_nmse_experiment, run_ser_experiment, run_training, write_csv, ExperimentConfig,
};
use robust_mimo::selftest;

/// Robust MIMO detection experiments.
#[derive(Parser, Debug)]
#[command(name = "rmimo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SER sweep over SNR, block index and detector.
    Simulate(RunArgs),
    /// Channel-estimate NMSE sweep over SNR, block index and CSI method.
    Nmse(RunArgs),
    /// Train the first network detector of the configuration.
    Train(RunArgs),
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file (CSV, or JSON for `train`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `mc.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Trained parameters used by every network detector.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    set_threads(args.threads)?;
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(s) = args.seed {
        cfg.mc.master_seed = s;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let rows = run_ser_experiment(&cfg, args.params.as_deref())?;
            write_csv(output(args.out.as_deref())?, &rows)?;
        }
        Command::Nmse(args) => {
            let cfg = load(&args)?;
            let rows = run_nmse_experiment(&cfg)?;
            write_csv(output(args.out.as_deref())?, &rows)?;
        }
        Command::Train(args) => {
            let cfg = load(&args)?;
            let (file, outcome) = run_training(&cfg)?;
            eprintln!(
                "validation loss {:.6} -> {:.6} over {} epochs",
                outcome.initial_val,
                outcome.best_val,
                outcome.val_history.len() - 1
            );
            let json = file.to_json()?;
            let mut out = output(args.out.as_deref())?;
            writeln!(out, "{json}")?;
            out.flush()?;
        }
        Command::Selftest { seed, threads } => {
            set_threads(threads)?;
            let mut ok = true;
            for c in selftest::run_all(seed)? {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
