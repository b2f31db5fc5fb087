//! Experiment runner: scenario definitions, training datasets, paired
//! receiver-only versus joint evaluations, and report files.

mod dataset;
mod report;
mod run;
mod scenario;

pub use dataset::{format_dataset, generate_dataset, parse_dataset, read_dataset, write_dataset, Dataset};
pub use report::{
    curve_path, emit_report, records_csv, spectrum_csv, sweep_csv, tap_path, CurveSeries, ManifestEntry, PointRecord, PointSummary,
    RunReport, SpectrumRecord, TapKind, TapRecord, TrainingSummary,
};
pub use run::{eval_noise, eval_symbols, evaluate, run, run_scenario, sweep_tx_fo, train_point, Evaluation, Progress};
pub use scenario::{CountRange, ScenarioSpec, TxFo, PRESETS};
