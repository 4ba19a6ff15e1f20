//! `lsat`: prepare data, pretrain the frozen base, run update strategies,
//! self-test, and report.
//!
//! Exit codes: 0 success, 1 validation or usage, 2 runtime, 3 self-test failure.

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Usage(String),
    Runtime(String),
    SelfTest(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::SelfTest(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(v) => {
                write!(f, "invalid configuration ({} problem{}):", v.len(), if v.len() == 1 { "" } else { "s" })?;
                for line in v {
                    write!(f, "\n  - {line}")?;
                }
                Ok(())
            }
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Runtime(msg) => f.write_str(msg),
            CliError::SelfTest(n) => write!(f, "self-test: {n} check(s) failed"),
        }
    }
}

impl From<lsat_core::Error> for CliError {
    fn from(e: lsat_core::Error) -> Self {
        use lsat_core::Error as E;
        match &e {
            E::Config(_) => CliError::Validation(vec![e.to_string()]),
            E::Parse { .. } | E::Validation { .. } | E::Usage(_) | E::Compatibility(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lsat", version, about = "Short- and long-term LoRA adapters for streaming recommendation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single seed, replacing the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root [default: $LSAT_OUT, else ./lsat-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Long-term horizon (periods 1..=m); also the pretraining window.
    #[arg(long = "m", global = true)]
    m: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest or generate the interaction log and write the periodized dataset.
    Prepare {
        /// Raw rating log (`user::item::rating::timestamp` unless configured).
        #[arg(long, conflicts_with = "synthetic")]
        dataset: Option<PathBuf>,
        /// Use the synthetic drift generator.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        period_size: Option<usize>,
        #[arg(long)]
        drift_amplitude: Option<f64>,
    },
    /// Pretrain and freeze the base model on the first m periods.
    Pretrain,
    /// Run every configured strategy for every seed.
    Run {
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long)]
        rank: Option<usize>,
        /// `delta_exact` or `factor_interp`.
        #[arg(long)]
        fusion_mode: Option<String>,
        /// Comma-separated coefficient grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Skip runs whose result file already matches the configuration.
        #[arg(long)]
        resume: bool,
    },
    /// Gradient, merge, fusion, AUC and serialization checks.
    Selftest {
        /// Flip the sign of the analytic gradient; the gradient check must fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Rebuild the report from result files (default: `<out>/results/*.json`).
    Report { results: Vec<PathBuf> },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let mut o = Overrides { out: cli.out.clone(), seed: cli.seed, m: cli.m, ..Overrides::default() };
    match &cli.command {
        Command::Prepare { dataset, synthetic, period_size, drift_amplitude } => {
            o.dataset = dataset.clone();
            o.synthetic = *synthetic;
            o.period_size = *period_size;
            o.drift_amplitude = *drift_amplitude;
        }
        Command::Run { strategies, rank, fusion_mode, grid, .. } => {
            o.strategies = strategies.clone();
            o.rank = *rank;
            o.fusion_mode = fusion_mode.clone();
            o.grid = grid.clone();
        }
        _ => {}
    }
    let mut problems = cfg.apply(&o);
    problems.extend(cfg.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(problems))
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Selftest { inject_fault } => selftest::run(*inject_fault),
        Command::Report { results } => commands::report(&resolve(cli)?, results),
        Command::Prepare { .. } => commands::prepare(&resolve(cli)?),
        Command::Pretrain => commands::pretrain(&resolve(cli)?),
        Command::Run { resume, .. } => commands::run(&resolve(cli)?, *resume),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
