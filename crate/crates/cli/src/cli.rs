//! Command-line front end. Exit codes: 0 success, 1 configuration or usage
//! error, 2 stage failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;

use qtrade_core::metrics::{comparison_csv, comparison_table};

use crate::config::{ExperimentConfig, Overrides, Strategy};
use crate::error::{CliError, Result};
use crate::experiment::{
    evaluate_checkpoint, generate_csv, report, run_experiment, run_forecast, run_matrix,
    MatrixEntry, COMPARISON_CSV, COMPARISON_TXT,
};
use crate::synthetic::{SyntheticKind, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "qtrade",
    version,
    about = "Quantum and classical A3C trading experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (output file for `generate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// classical, quantum or random.
    #[arg(long, global = true, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Train the forecaster and add its signal to the observation.
    #[arg(long, global = true)]
    pub use_forecast: bool,
    /// A3C worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<SyntheticKind, String> {
    match s {
        "sawtooth" => Ok(SyntheticKind::Sawtooth),
        "trend" => Ok(SyntheticKind::Trend),
        "white-noise" => Ok(SyntheticKind::WhiteNoise),
        "ar1" => Ok(SyntheticKind::Ar1),
        _ => Err(format!(
            "unknown kind `{s}` (expected sawtooth, trend, white-noise or ar1)"
        )),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic market CSV.
    Generate {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<SyntheticKind>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Train the forecaster and write forecasts plus the augmented market CSV.
    Forecast,
    /// Run the full pipeline for one strategy.
    Train,
    /// Re-evaluate a finished run from its snapshot and checkpoints.
    Evaluate { run_dir: PathBuf },
    /// Redraw plots and compare the metrics of finished runs.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
    /// Run several strategies and write a comparison table.
    Matrix {
        /// Comma-separated subset of classical, classical+lstm, quantum,
        /// quantum+lstm, random. Defaults to all five.
        #[arg(long, value_delimiter = ',', value_parser = parse_entry)]
        strategies: Vec<MatrixEntry>,
    },
}

fn parse_entry(s: &str) -> std::result::Result<MatrixEntry, String> {
    MatrixEntry::ALL
        .into_iter()
        .find(|e| e.label() == s)
        .ok_or_else(|| format!("unknown matrix strategy `{s}`"))
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        strategy: common.strategy,
        use_forecast: common.use_forecast,
        workers: common.workers,
    });
    config.resolve()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { kind, length } => {
            let mut config = match &cli.common.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            let spec = config
                .data
                .synthetic
                .get_or_insert_with(SyntheticSpec::default);
            if let Some(k) = kind {
                spec.kind = k;
            }
            if let Some(n) = length {
                spec.length = n;
            }
            if let Some(s) = cli.common.seed {
                spec.seed = s;
            }
            let out = cli
                .common
                .out
                .unwrap_or_else(|| PathBuf::from("synthetic.csv"));
            let series = generate_csv(&config, &out)?;
            println!("wrote {} rows to {}", series.len(), out.display());
        }
        Command::Forecast => {
            let config = load_config(&cli.common)?;
            let f = run_forecast(&config)?;
            match f.evaluation {
                Some(e) => println!(
                    "held-out rmse {:.4}%  pearson {:.4}  directional accuracy {:.4}",
                    e.rmse, e.pearson, e.directional_accuracy
                ),
                None => println!("too few validation windows to score the forecaster"),
            }
            println!("artifacts in {}", config.out.display());
        }
        Command::Train => {
            let config = load_config(&cli.common)?;
            let run = run_experiment(&config)?;
            print!(
                "{}",
                run.report
                    .to_table(&MatrixEntry::new(config.strategy, config.use_forecast).label())
            );
            println!("artifacts in {}", run.dir.display());
        }
        Command::Evaluate { run_dir } => {
            let out = cli.common.out.unwrap_or_else(|| run_dir.join("evaluation"));
            let run = evaluate_checkpoint(&run_dir, &out)?;
            print!("{}", run.report.to_table("evaluation"));
            println!("artifacts in {}", run.dir.display());
        }
        Command::Report { run_dirs } => {
            let columns = report(&run_dirs)?;
            let table = comparison_table(&columns);
            print!("{table}");
            if let Some(out) = cli.common.out {
                std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
                for (name, body) in [
                    (COMPARISON_TXT, table),
                    (COMPARISON_CSV, comparison_csv(&columns)),
                ] {
                    let path = out.join(name);
                    std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
                }
            }
        }
        Command::Matrix { strategies } => {
            let config = load_config(&cli.common)?;
            let entries = if strategies.is_empty() {
                MatrixEntry::ALL.to_vec()
            } else {
                strategies
            };
            let outcome = run_matrix(&config, &entries)?;
            print!("{}", outcome.table);
            let failed = outcome.failed();
            if let Some(first) = outcome.runs.iter().find_map(|(_, r)| r.as_ref().err()) {
                return Err(CliError::MatrixFailures {
                    columns: failed.into_iter().map(String::from).collect(),
                    code: first.exit_code(),
                });
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
