//! Configuration, data ingestion, Monte Carlo experiments and reports.

pub mod config;
pub mod data;
pub mod experiment;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, GeneratorConfig};
pub use data::{load_returns, read_values, transform, write_series, Scheme};
pub use experiment::{
    replication_seed, run_selection_experiment, run_size_power_experiment, ALTERNATIVE_SEED_OFFSET,
};
pub use pipeline::{run_pipeline, PipelineEntry, PipelineReport, TestOutcome};
pub use report::{
    emit_report, render_report, ExperimentKind, McReport, RejectionRate, Report, ReportFormat,
    SelectionRates, TestRates,
};
