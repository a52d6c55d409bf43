//! Experiment driver: configuration, repetitions, result files and
//! plot-data export.

mod config;
mod export;
mod run;

pub use config::{ExperimentConfig, ExternalSpec};
pub use export::{export_plotdata, ExportReport};
pub use run::{
    initial_design, rep_dir, run_experiment, summarize, ExperimentResult, RepResult, SummaryRow, CONFIG_FILE,
    ERRORS_FILE, METRICS_FILE, SUMMARY_FILE, TRUTH_FILE,
};
