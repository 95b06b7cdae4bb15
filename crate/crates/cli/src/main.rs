//! `sqkerr` command-line driver.

// `!(x > 0.0)` style checks are how NaN is rejected alongside bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, TomographyConfig};
use error::CliError;
use output::OutDir;

#[derive(Parser)]
#[command(name = "sqkerr", version, about = "Phonon squeezing simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: config, then CPU count).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Time evolution of the effective or full model.
    Simulate(Common),
    /// Evaluate a quantity over a parameter grid.
    Sweep(Common),
    /// Maximum-likelihood state reconstruction from a Wigner map.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Wigner map CSV.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Fock truncation of the reconstruction.
        #[arg(long, value_name = "N")]
        truncation: Option<usize>,
    },
    /// Fit the driven Duffing model to phonon spectroscopy.
    FitDuffing {
        #[command(flatten)]
        common: Common,
        /// CSV with delta_p_MHz and p_e columns.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Decoherence, Kerr and measurement-time squeezing limits.
    Limits(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Sweep(c) | Command::Limits(c) => c,
            Command::Reconstruct { common, .. } | Command::FitDuffing { common, .. } => common,
        }
    }
}

fn resolve(cmd: &Command) -> Result<RunConfig, CliError> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if cfg.workers == Some(0) {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    match cmd {
        Command::Reconstruct { input, truncation, .. } => {
            let t = cfg.tomography.get_or_insert_with(TomographyConfig::default);
            if input.is_some() {
                t.input = input.clone();
            }
            if let Some(n) = truncation {
                t.truncation = *n;
            }
        }
        Command::FitDuffing { input: Some(i), .. } => {
            let d = cfg.duffing.as_mut().ok_or_else(|| CliError::Config("fit-duffing: missing [duffing] section".into()))?;
            d.input = Some(i.clone());
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.command)?;
    if let Some(n) = cfg.workers {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = OutDir::create(&cli.command.common().out)?;
    match &cli.command {
        Command::Simulate(_) => commands::simulate::run(&cfg, &out),
        Command::Sweep(_) => commands::sweep::run(&cfg, &out),
        Command::Reconstruct { .. } => commands::reconstruct::run(&cfg, &out),
        Command::FitDuffing { .. } => commands::fit_duffing::run(&cfg, &out),
        Command::Limits(_) => commands::limits::run(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).expect("error report serializes");
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
