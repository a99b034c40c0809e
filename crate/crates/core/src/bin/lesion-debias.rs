use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lesion_debias::experiment::{cmd_generate, cmd_report, cmd_run, cmd_trap, ExperimentConfig, Pipeline, ReportFormat};
use lesion_debias::Error;

/// Synthetic skin-lesion bias testbed.
///
/// Outputs default to `$LESION_DEBIAS_OUT/<name>/...` (or `runs/<name>/...`).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.lr0=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the sample pool.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Cut a trap split from a pool.
    Trap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one pipeline for every configured run.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = ["unchanged", "normalized", "lntl"])]
        pipeline: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize results tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = ["csv", "json"], default_value = "csv")]
        format: String,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { cfg, out, force } => {
            let c = cfg.load()?;
            let out = out.unwrap_or_else(|| c.pool_dir());
            let n = cmd_generate(&c, &out, force)?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Command::Trap { cfg, pool, out } => {
            let c = cfg.load()?;
            let pool = pool.unwrap_or_else(|| c.pool_dir());
            let out = out.unwrap_or_else(|| c.split_dir());
            let r = cmd_trap(&c, &pool, &out)?;
            eprintln!(
                "split written to {}: train phi {:.3}, test phi {:.3}",
                out.display(),
                r.train_corr,
                r.test_corr
            );
        }
        Command::Run { cfg, pipeline, out } => {
            let c = cfg.load()?;
            let pipeline: Pipeline = pipeline.parse()?;
            let out = out.unwrap_or_else(|| c.root().join(pipeline.name()));
            let report = cmd_run(&c, pipeline, &out)?;
            for r in &report.reports {
                println!(
                    "{} {} {}: AUC {:.3} ± {:.3} over {} runs",
                    r.experiment, r.dataset, r.transform, r.mean, r.std, r.n_runs
                );
            }
        }
        Command::Report { input, format } => {
            let format: ReportFormat = format.parse()?;
            print!("{}", cmd_report(&input, format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
