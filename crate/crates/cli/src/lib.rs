//! The `volmix` command line: fetch, prepare, train, evaluate and report
//! volatility forecasts for a roster of assets.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, EXIT_OK, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "volmix", version, about = "Multiscale-mixing volatility forecasts")]
pub struct Cli {
    /// JSON run configuration, or a manifest from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration value (dotted key, JSON or string value).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for checkpoints, metrics, plots and reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Read recorded chart responses from DIR instead of the network.
    #[arg(long, global = true, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Cmd {
    /// Download (or copy from fixtures) daily bars into the data cache.
    Fetch,
    /// Compute volatility series and split summaries.
    Prepare,
    /// Train one model per (ticker, horizon).
    Train,
    /// Score checkpoints on the test split and write metrics.
    Eval,
    /// Fetch missing data, train, evaluate, report and write a manifest.
    Run,
    /// Rebuild the markdown report from the metrics files.
    Report,
}

fn execute(cli: &Cli, argv: &[String]) -> Result<i32, CliError> {
    let overrides = Overrides {
        sets: cli.sets.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        fixtures: cli.fixtures.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let entries = cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::create_dir_all(&cfg.data_dir)?;
    let outcome = match cli.command {
        Cmd::Fetch => commands::cmd_fetch(&cfg, &entries)?,
        Cmd::Prepare => commands::cmd_prepare(&cfg, &entries)?,
        Cmd::Train => commands::cmd_train(&cfg, &entries)?,
        Cmd::Eval => commands::cmd_eval(&cfg, &entries)?,
        Cmd::Run => commands::cmd_run(&cfg, &entries, argv)?,
        Cmd::Report => commands::cmd_report(&cfg, &entries)?,
    };
    Ok(outcome.exit_code())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.exit_code()
        }
    }
}
