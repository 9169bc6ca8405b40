//! Reproducible Monte-Carlo experiments.
//!
//! An [`ExperimentConfig`] names an experiment kind, its grids and a master
//! seed; [`run_experiment`] returns one [`ReportRow`] per grid point with the
//! Monte-Carlo median bias of the estimator and, where the kind has one, the
//! bound it is compared against. Rows are identical for any worker count.

pub mod config;
pub mod dgp;
pub mod engine;
pub mod experiments;
pub mod hulc;
pub mod report;
pub mod seed;

pub use config::{ExperimentConfig, ExperimentSpec, OutputFormat, OutputSpec, EXPERIMENT_KINDS};
pub use engine::{resolve_workers, Engine, WORKERS_ENV};
pub use experiments::{run_experiment, run_experiment_on};
pub use hulc::{hulc_batches, hulc_interval};
pub use report::{write_csv, write_json, ReportRow};
pub use seed::derive_seed;

use std::io::Write;

/// Writes `rows` in `format`, honoring the config's timing flag.
pub fn write_report<W: Write>(
    config: &ExperimentConfig,
    rows: &[ReportRow],
    format: OutputFormat,
    writer: W,
) -> crate::Result<()> {
    match format {
        OutputFormat::Csv => write_csv(rows, writer, config.record_timing),
        OutputFormat::Json => write_json(config, rows, writer),
    }
}
