//! Batch runner: a TOML config names one experiment; the run produces CSV
//! tables, a text report with pass/fail verdicts and a gnuplot script.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod presets;
pub mod report;

use std::time::Instant;

use config::ExperimentConfig;
use report::RunReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs the configured experiment on a pool of `workers` threads (0 means
/// rayon's default). Module errors end up in `report.error`, never a panic.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport {
        experiment: cfg.experiment.clone(),
        seed: cfg.seed,
        version: VERSION.to_string(),
        preset_table: presets::PRESET_TABLE.to_string(),
        config_echo: cfg.echo(),
        ..Default::default()
    };
    let outcome = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| e.to_string())
        .and_then(|pool| pool.install(|| experiments::dispatch(cfg)));
    match outcome {
        Ok(o) => {
            report.tables = o.tables;
            report.verdicts = o.verdicts;
            report.notes = o.notes;
            report.artifacts = o.artifacts;
        }
        Err(e) => report.error = Some(e),
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    report
}
