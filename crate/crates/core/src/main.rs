use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use medbias::partialling::{fwl_estimate, RegressionData};
use medbias::simlab::config::format_for_path;
use medbias::simlab::{
    resolve_workers, run_experiment_on, write_report, Engine, ExperimentConfig, OutputFormat, EXPERIMENT_KINDS,
};
use medbias::Error;

#[derive(Parser)]
#[command(name = "medbias", version, about = "Median-bias bounds for M/Z-estimators, checked by simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report.
    Run {
        config: PathBuf,
        /// Report path; overrides the config. Without either, CSV goes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Worker threads; overrides MEDBIAS_WORKERS and the config.
        #[arg(short, long)]
        workers: Option<usize>,
        /// Master seed; overrides the config.
        #[arg(short, long)]
        seed: Option<u64>,
    },
    /// List experiment kinds.
    ListExperiments,
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Residualized least squares on a CSV with columns y, t, x1..xd.
    Fwl { data: PathBuf },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            output,
            format,
            workers,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let engine = Engine::new(resolve_workers(workers, cfg.workers)?)?;
            let rows = run_experiment_on(&cfg, &engine)?;
            let path = output.or_else(|| cfg.output.as_ref().map(|o| o.path.clone()));
            let fmt = match (format, &path) {
                (Some(Format::Csv), _) => OutputFormat::Csv,
                (Some(Format::Json), _) => OutputFormat::Json,
                (None, Some(p)) if cfg.output.as_ref().is_some_and(|o| &o.path == p) => {
                    cfg.output.as_ref().map(|o| o.resolved_format()).unwrap_or(OutputFormat::Csv)
                }
                (None, Some(p)) => format_for_path(p),
                (None, None) => OutputFormat::Csv,
            };
            match path {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(&p)?);
                    write_report(&cfg, &rows, fmt, &mut w)?;
                    w.flush()?;
                    eprintln!("{} rows written to {}", rows.len(), p.display());
                }
                None => write_report(&cfg, &rows, fmt, io::stdout().lock())?,
            }
        }
        Command::ListExperiments => {
            for (kind, description) in EXPERIMENT_KINDS {
                println!("{kind:<16} {description}");
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            println!("{}: ok ({}, {} reps)", config.display(), cfg.spec.kind_name(), cfg.reps);
        }
        Command::Fwl { data } => {
            let data = RegressionData::from_csv_path(&data)?;
            let fit = fwl_estimate(&data)?;
            let out = json!({
                "n": data.n(),
                "d": data.d(),
                "theta_hat": fit.theta_hat,
                "beta_t_hat": fit.beta_t_hat.as_slice(),
                "beta_y_hat": fit.beta_y_hat.as_slice(),
                "orthogonality_residual": fit.orthogonality_residual,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Io(_) => 3,
                _ => 1,
            })
        }
    }
}
