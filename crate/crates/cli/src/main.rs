//! `tvstab`: run stability experiments from the command line.
//!
//! Exit codes: 0 on completion (declared algorithmic failures included),
//! 1 for bad configuration or parameters, 2 for internal errors and for
//! failing `verify` criteria.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvstab::Seed;

use config::{ExperimentConfig, FileConfig, Format, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] tvstab::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Core(e) if e.is_internal() => 2,
            Failure::Core(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tvstab", version, about = "Stability experiments for learning rules over finite domains")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed as hex (required here or in the config).
    #[arg(long, global = true)]
    seed: Option<Seed>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Couple two distributions through a shared reference process.
    Couple,
    /// Replicable statistical query on a Bernoulli source.
    Sq,
    /// Replicable heavy hitters of a finite law.
    HeavyHitters,
    /// Replicable agnostic learner over a finite class.
    Agnostic,
    /// Globally stable learner to replicable learner.
    GlobalToRepl,
    /// List-globally stable learner to TV indistinguishable learner.
    ListglobalToTv,
    /// TV indistinguishable learner to differentially private learner.
    TvToDp,
    /// Amplify TV indistinguishability.
    Amplify,
    /// Smooth boosting of a weak learner.
    Boost,
    /// Stability audit of a fixture.
    Audit,
    /// Run acceptance criteria (all when none are given).
    Verify { ids: Vec<usize> },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Couple => "couple",
            Command::Sq => "sq",
            Command::HeavyHitters => "heavy-hitters",
            Command::Agnostic => "agnostic",
            Command::GlobalToRepl => "global-to-repl",
            Command::ListglobalToTv => "listglobal-to-tv",
            Command::TvToDp => "tv-to-dp",
            Command::Amplify => "amplify",
            Command::Boost => "boost",
            Command::Audit => "audit",
            Command::Verify { .. } => "verify",
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = Overrides { seed: cli.seed, trials: cli.trials, out: cli.out, format: cli.format };
    let cfg = ExperimentConfig::resolve(cli.command.name(), file, flags)?;
    let report = match &cli.command {
        Command::Couple => commands::couple(&cfg),
        Command::Sq => commands::sq(&cfg),
        Command::HeavyHitters => commands::heavy_hitters(&cfg),
        Command::Agnostic => commands::agnostic(&cfg),
        Command::GlobalToRepl => commands::global_to_repl(&cfg),
        Command::ListglobalToTv => commands::listglobal_to_tv_cmd(&cfg),
        Command::TvToDp => commands::tv_to_dp_cmd(&cfg),
        Command::Amplify => commands::amplify_cmd(&cfg),
        Command::Boost => commands::boost(&cfg),
        Command::Audit => commands::audit_cmd(&cfg),
        Command::Verify { ids } => commands::verify(&cfg, ids),
    }?;
    report.write(&cfg)?;
    Ok(report.pass || !matches!(cli.command, Command::Verify { .. }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("tvstab: {e}");
            ExitCode::from(e.code())
        }
    }
}
