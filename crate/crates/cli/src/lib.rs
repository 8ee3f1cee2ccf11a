//! Experiment harness for the `rwalk` simulator: JSON configs in, CSV and
//! text reports out.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rwalk", version, about = "Random-walk SGD experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured sampler and write traces plus a summary.
    Run(Common),
    /// Dump the graph, dataset, kernels and stationary distributions.
    Matrix(Common),
    /// Exact mixing-time, reversibility and error-gap report.
    Diagnose(Common),
    /// Sweep one parameter over values and replica seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=v1,v2,...`
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
    },
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentConfig::from_json(&text)
}

/// Executes a parsed command line and returns what to print on stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(c) => {
            let cfg = load_config(&c.config)?;
            let runs = commands::cmd_run(&cfg, &c.out)?;
            Ok(serde_json::to_string_pretty(&runs).expect("summary serializes") + "\n")
        }
        Command::Matrix(c) => {
            let cfg = load_config(&c.config)?;
            let files = commands::cmd_matrix(&cfg, &c.out)?;
            Ok(files.iter().map(|p| format!("{}\n", p.display())).collect())
        }
        Command::Diagnose(c) => {
            let cfg = load_config(&c.config)?;
            Ok(commands::cmd_diagnose(&cfg, &c.out)?.to_key_values())
        }
        Command::Sweep { common, sweep, replicas } => {
            let cfg = load_config(&common.config)?;
            let (name, values) = config::parse_sweep(sweep)?;
            let rows = commands::cmd_sweep(&cfg, &name, &values, *replicas, commands::threads_from_env(), &common.out)?;
            Ok(format!("{} rows written to {}\n", rows.len(), common.out.join("sweep.csv").display()))
        }
    }
}
