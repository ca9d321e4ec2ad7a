//! Evaluation harness: dataset ingestion, budgeted task construction,
//! algorithm adapters, metrics, and wins / mean-rank aggregation.

pub mod adapter;
pub mod aggregate;
pub mod dataset;
pub mod metrics;
pub mod records;
pub mod report;
pub mod runner;
pub mod synthetic;
pub mod tasks;

pub use adapter::{BaselineForecaster, Forecaster, ModelForecaster, SubprocessForecaster};
pub use aggregate::{aggregate, fractional_ranks, AlgoSummary, Aggregate, Dimension, GroupKey, SummaryRow, WIN_TOLERANCE};
pub use dataset::{load_dataset, read_dataset, Dataset, Series};
pub use metrics::{compute_metrics, Metric, Metrics, EPS_Y};
pub use records::{append_records, load_records, read_records, write_records, BudgetKind, ResultRecord};
pub use report::write_report;
pub use runner::{run_benchmark, run_task, run_with_time_budget, RunOutcome, RunnerOptions};
pub use synthetic::{synthetic_dataset, synthetic_zero_shot_records, synthetic_zero_shot_wins, SyntheticEvalConfig};
pub use tasks::{build_tasks, Anchors, Budget, EvalTask, TaskData, DEFAULT_ANCHOR, INPUT_LEN};
