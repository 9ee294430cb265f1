//! Parallel gradient evaluation, traces and experiment drivers.

mod config;
mod executor;
mod experiment;
mod trace;

pub use config::{parse_seeds, Mode, Settings};
pub use executor::{parallel_gradients, Evaluation, GradientExecutor};
pub use experiment::{
    ablate_n, lr_sweep, run_baseline_seed, run_experiment, run_gg_seed, samples_per_step,
    trend_improves, ExperimentConfig, ObjectiveSpec, OptimizerKind,
};
pub use trace::{
    fmt_f64, mean_std, read_summary_csv, read_trace_csv, AggregateRow, RunTrace, StepRecord,
    SummaryRow, SummaryTable, TraceRow, AGGREGATE_HEADER, SUMMARY_HEADER, TRACE_HEADER,
};
