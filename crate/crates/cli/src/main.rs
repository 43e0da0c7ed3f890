mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use pipeline::CliError;

/// Batch driver for the bottom-up repayment-risk pipeline.
#[derive(Parser)]
#[command(name = "npl-risk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic loan book plus its ground-truth file
    Generate(CommonArgs),
    /// Train one quantile model per category on the training split
    Train(CommonArgs),
    /// Estimate per-date factor realizations and category loadings
    FitCopula(FitArgs),
    /// Simulate the portfolio rate distribution for every test date
    Simulate(CommonArgs),
    /// Score calibration, MAPE and the top-down baseline
    Evaluate(CommonArgs),
    /// Train, fit-copula, simulate and evaluate in sequence
    RunAll(FitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Omit timestamps from report headers so reruns are byte-identical
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Proceed even when a date's factor fit is degenerate (all loadings 0)
    #[arg(long)]
    allow_degenerate: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints its own help/version output on these paths
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match &cli.command {
        Command::Generate(args) => with_config(args, |cfg, _| pipeline::cmd_generate(cfg)),
        Command::Train(args) => with_config(args, |cfg, _| pipeline::cmd_train(cfg)),
        Command::FitCopula(args) => with_config(&args.common, |cfg, _| {
            pipeline::cmd_fit_copula(cfg, args.allow_degenerate)
        }),
        Command::Simulate(args) => with_config(args, |cfg, ts| pipeline::cmd_simulate(cfg, ts)),
        Command::Evaluate(args) => with_config(args, |cfg, ts| pipeline::cmd_evaluate(cfg, ts)),
        Command::RunAll(args) => with_config(&args.common, |cfg, ts| {
            pipeline::cmd_run_all(cfg, args.allow_degenerate, ts)
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}

fn with_config(
    args: &CommonArgs,
    run: impl FnOnce(&RunConfig, Option<u64>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config).map_err(CliError::usage)?;
    let timestamp = if args.no_timestamp {
        None
    } else {
        Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        )
    };
    run(&cfg, timestamp)
}
