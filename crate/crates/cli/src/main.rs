mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Zero-shot forecasting from a synthetic prior: generate, train, predict, benchmark, report.
#[derive(Debug, Parser)]
#[command(name = "synthcast", version, about)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SYNTHCAST_THREADS")]
    pub threads: Option<usize>,

    /// Directory against which relative output paths are resolved.
    #[arg(long, global = true, env = "SYNTHCAST_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    /// Flat TOML file of settings; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample synthetic series from the prior and write them as CSV.
    SynthGen(SynthGenArgs),
    /// Fit the model on synthetic tasks.
    Train(TrainArgs),
    /// Forecast future dates of the series in a CSV file.
    Predict(PredictArgs),
    /// Run algorithms over datasets under data and time budgets.
    Benchmark(BenchmarkArgs),
    /// Aggregate benchmark results into tables and plots.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    /// Number of series.
    #[arg(long)]
    pub series: Option<usize>,
    /// Points per series.
    #[arg(long)]
    pub length: Option<usize>,
    /// daily, weekly or monthly.
    #[arg(long)]
    pub freq: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplier on the noise-scale prior (0 gives noise-free series).
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Training window the series are meant for; must not exceed the length.
    #[arg(long)]
    pub window: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub max_input_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// robust or minmax.
    #[arg(long)]
    pub scaler: Option<String>,
    /// Train against noise-free targets.
    #[arg(long, value_enum)]
    pub noise_removal: Option<OnOff>,
    /// Multiplier on the noise-scale prior.
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub series_per_frequency: Option<usize>,
    /// Points per synthetic training series.
    #[arg(long)]
    pub length: Option<usize>,
    /// Input window of each training task.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long)]
    pub validation_tasks: Option<usize>,
    /// Instead of epochs, repeatedly fit this many fixed tasks (smoke test).
    #[arg(long)]
    pub overfit_tasks: Option<usize>,
    /// Step limit of the fixed-task mode.
    #[arg(long)]
    pub overfit_steps: Option<usize>,
    /// Weight file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// History CSV (default: `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// CSV with a date column and one column per series.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of future steps.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Grid of the input (inferred when omitted).
    #[arg(long)]
    pub freq: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Dataset CSV files.
    #[arg(long = "dataset", num_args = 1..)]
    pub datasets: Vec<PathBuf>,
    #[arg(long)]
    pub freq: Option<String>,
    /// Model weights; registers the `model` algorithm.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Algorithms to run (default: all registered).
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    /// External trainable algorithm: `name=program [args..]`.
    #[arg(long = "adapter")]
    pub adapters: Vec<String>,
    /// External zero-shot algorithm: `name=program [args..]`.
    #[arg(long = "zero-shot-adapter")]
    pub zero_shot_adapters: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub data_budgets: Vec<usize>,
    /// Seconds.
    #[arg(long, value_delimiter = ',')]
    pub time_budgets: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub pred_lengths: Vec<usize>,
    #[arg(long)]
    pub input_len: Option<usize>,
    /// Anchor indices (default: 500 or the largest feasible).
    #[arg(long, value_delimiter = ',')]
    pub anchors: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run untimed tasks in parallel.
    #[arg(long)]
    pub parallel: bool,
    /// Results CSV, appended to.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// mse, mae, mape or mspe (repeatable).
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
    /// Grouping dimensions: dataset, series, prediction_length, seed, budget_kind, budget_value.
    #[arg(long, value_delimiter = ',')]
    pub group_by: Vec<String>,
    /// Output directory for tables and plots.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad flags or settings; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
