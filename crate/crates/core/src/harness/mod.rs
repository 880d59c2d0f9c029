//! Experiment orchestration: averaged references, cross-validation folds,
//! method comparison and report export.

mod experiment;
mod folds;
mod reference;
mod report;

pub use experiment::{
    flag_over_smoothing, run_experiment, Cell, CellStatus, EvalReport, ExperimentConfig, FlaggedSample, FoldSummary,
    Method, RunSnapshot, SampleResult, Space, TrainingRecord, OVER_SMOOTHING_FACTOR, REPORT_SCHEMA_VERSION,
};
pub use folds::{plan_folds, FoldAssignment, FoldPlan, FoldStrategy};
pub use reference::{make_image_reference, make_reference, relative_max_error, LINEARITY_TOLERANCE};
pub use report::{
    export_report, load_report, parse_report_json, report_csv, report_json, summary_csv, ReportFormat, CSV_HEADER,
    INF_CAP_DB, SUMMARY_HEADER,
};
