//! `hvdw`: identity suites, residual reports, gauge checks and the
//! emergent-equivariance experiment from JSON configs.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage, I/O or refused config.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Engine(#[from] hvdw::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Engine(hvdw::Error::Io(_) | hvdw::Error::Json(_) | hvdw::Error::Config(_)) => 2,
            CliError::Engine(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "hvdw", version, about = "Multisymplectic Yang-Mills verification and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed(s) in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved plan without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the coframe identities of a Lie algebra.
    Identities {
        #[command(flatten)]
        common: Common,
        /// Built-in name or spec file, instead of a config.
        #[arg(long, conflicts_with = "config")]
        algebra: Option<String>,
        /// Base dimensions to check.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        assert_unimodular: bool,
    },
    /// Evaluate the HVDW residuals of a state.
    Residuals {
        #[command(flatten)]
        common: Common,
    },
    /// Run the emergent-equivariance experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Check gauge and dual-gauge invariance on a state.
    GaugeCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn required(c: &Common) -> Result<&Path, CliError> {
    c.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))
}

fn plan<T: serde::Serialize>(doc: &T) -> commands::Finding {
    commands::Finding { report: serde_json::json!({ "plan": doc }), passed: true }
}

fn run(cli: Cli) -> Result<commands::Finding, CliError> {
    match cli.command {
        Command::Identities { common, algebra, n, assert_unimodular } => {
            let cfg = match algebra {
                Some(name) => commands::identities_for(&name, n, assert_unimodular, Path::new("."))?,
                None => {
                    let mut cfg = config::load::<config::IdentitiesConfig>(required(&common)?)?.doc;
                    if !n.is_empty() {
                        cfg.n = n;
                    }
                    cfg.assert_unimodular |= assert_unimodular;
                    cfg
                }
            };
            if common.dry_run {
                return Ok(plan(&cfg));
            }
            commands::identities(&cfg, common.out.as_deref())
        }
        Command::Residuals { common } => {
            let loaded = config::load::<config::ResidualsConfig>(required(&common)?)?;
            if common.dry_run {
                return Ok(plan(&loaded.doc));
            }
            commands::residuals(&loaded.doc, &loaded.dir, common.seed, common.out.as_deref())
        }
        Command::GaugeCheck { common } => {
            let loaded = config::load::<config::GaugeCheckConfig>(required(&common)?)?;
            if common.dry_run {
                return Ok(plan(&loaded.doc));
            }
            commands::gauge_check(&loaded.doc, &loaded.dir, common.seed, common.out.as_deref())
        }
        Command::Experiment { common } => {
            let mut cfg = config::load::<hvdw::solver::ExperimentConfig>(required(&common)?)?.doc;
            if let Some(seed) = common.seed {
                cfg.seeds = vec![seed];
            }
            let f = commands::experiment(&cfg, common.out.as_deref(), common.dry_run)?;
            Ok(if common.dry_run { commands::Finding { report: serde_json::json!({ "plan": f.report }), passed: true } } else { f })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(f) => {
            let text = serde_json::to_string_pretty(&f.report).expect("report json");
            // a closed pipe is not an error of the computation
            let _ = writeln!(std::io::stdout(), "{text}");
            if f.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("hvdw: check failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("hvdw: {e}");
            ExitCode::from(e.code())
        }
    }
}
