//! `strata`: simulate, fit, cross-validate, predict, and report a sparse
//! Bayesian multi-view subject model.
//!
//! Exit codes: 0 success, 1 configuration or data error, 2 I/O failure,
//! 3 sampler failure.

mod commands;
mod run;
mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::{Overrides, RunConfig};
use strata::{Error, Result};

#[derive(Parser)]
#[command(name = "strata", version, about = "Sparse Bayesian multi-view subject model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every subcommand accepts.
#[derive(Args)]
struct CommonArgs {
    /// Run-configuration JSON: the model plus sampler and pipeline options.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads for chain- and subject-level parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

/// Sampler-size flags shared by fit and cv.
#[derive(Args)]
struct SamplerArgs {
    /// Number of MCMC chains; overrides the config file.
    #[arg(long)]
    chains: Option<usize>,
    /// Warmup iterations per chain; overrides the config file.
    #[arg(long)]
    warmup: Option<usize>,
    /// Kept iterations per chain; overrides the config file.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with its generating ground truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample the posterior for a dataset; write draws and diagnostics.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Dataset directory containing manifest.json.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Exit with a sampler error if convergence diagnostics fail.
        #[arg(long)]
        strict: bool,
    },
    /// Stratified k-fold cross-validation of response prediction.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Dataset directory containing manifest.json.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Fold count; overrides the config file.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Predict held-out subjects' responses from a stored fit.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit directory containing draws.csv and resolved_config.json.
        #[arg(long, value_name = "DIR")]
        fit: PathBuf,
        /// Dataset directory of the subjects to predict.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Export factor-loading summaries from a stored fit.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit directory containing draws.csv and resolved_config.json.
        #[arg(long, value_name = "DIR")]
        fit: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let run = resolved(&common, Overrides { seed: common.seed, ..Default::default() })?;
            commands::simulate(run, &common.out)
        }
        Command::Fit { common, sampler, data, strict } => {
            let run = resolved(
                &common,
                Overrides {
                    seed: common.seed,
                    chains: sampler.chains,
                    warmup: sampler.warmup,
                    samples: sampler.samples,
                    k: None,
                    strict,
                },
            )?;
            commands::fit(run, &data, &common.out)
        }
        Command::Cv { common, sampler, data, k } => {
            let run = resolved(
                &common,
                Overrides {
                    seed: common.seed,
                    chains: sampler.chains,
                    warmup: sampler.warmup,
                    samples: sampler.samples,
                    k,
                    strict: false,
                },
            )?;
            commands::cv(run, &data, &common.out)
        }
        Command::Predict { common, fit, data } => {
            let run = resolved(&common, Overrides { seed: common.seed, ..Default::default() })?;
            commands::predict(run, &fit, &data, &common.out)
        }
        Command::Report { common, fit } => {
            let run = resolved(&common, Overrides { seed: common.seed, ..Default::default() })?;
            commands::report(run, &fit, &common.out)
        }
    }
}

/// Load the config file, apply flag overrides, and size the thread pool.
fn resolved(common: &CommonArgs, overrides: Overrides) -> Result<RunConfig> {
    let mut run = RunConfig::load(common.config.as_deref())?;
    run.apply(&overrides);
    run.validate()?;
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(run)
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Io { .. } => 2,
        Error::Sampler(_) | Error::NonFinite { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
