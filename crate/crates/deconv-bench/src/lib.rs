//! Experiment runner and analysis layer for the deconvolution versus batch
//! normalization comparison.
//!
//! A plan names an architecture, a dataset subset, the normalization modes
//! to compare, epoch settings, and an attempt count; the runner executes one
//! training run per (mode, epochs, attempt) cell with a seed derived from the
//! cell identity, records accuracy and wall-clock time per cell on disk
//! (making reruns resumable), and the report stage classifies reproduced
//! values against a baseline CSV and computes time ratios.

pub mod metrics;
pub mod plan;
pub mod record;
pub mod report;
pub mod runner;

pub use metrics::{avg_sq_dev, classify_value, time_ratios, Classification, ThresholdMode, TimeRatio};
pub use plan::{Cell, DatasetChoice, ExperimentPlan};
pub use record::{RunRecord, RunStatus};
pub use report::{emit_report, parse_baseline, BaselineRow, ReportPaths};
pub use runner::{run_plan, RunOptions};
