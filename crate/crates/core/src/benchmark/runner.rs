//! Budgeted execution of algorithms over evaluation tasks.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use super::adapter::Forecaster;
use super::dataset::Dataset;
use super::metrics::compute_metrics;
use super::records::{BudgetKind, ResultRecord};
use super::tasks::{EvalTask, TaskData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub predictions: Vec<f64>,
    pub runtime_seconds: f64,
    pub failed: bool,
}

fn guarded<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".into());
            Err(Error::Adapter { name: name.to_string(), message })
        }
    }
}

fn zero_filled(len: usize, runtime_seconds: f64) -> RunOutcome {
    RunOutcome { predictions: vec![0.0; len], runtime_seconds, failed: true }
}

/// Fits (if trainable) and predicts one task.
///
/// The clock starts at the first training step and is checked after every
/// step; once it exceeds `budget_seconds` training stops and whatever model
/// exists predicts. Without a usable model, or on any adapter error or panic,
/// predictions are zeros and the outcome is marked failed. `None` means no
/// time limit. Zero-shot algorithms report their prediction time.
pub fn run_with_time_budget(
    adapter: &mut dyn Forecaster,
    data: &TaskData<'_>,
    budget_seconds: Option<f64>,
    seed: u64,
) -> RunOutcome {
    let n = data.horizon.len();
    let name = adapter.name().to_string();
    if let Some(b) = budget_seconds {
        debug_assert!(b > 0.0);
    }

    if adapter.is_zero_shot() {
        let started = Instant::now();
        let result = guarded(&name, || adapter.predict(data.input, &data.horizon));
        let runtime = started.elapsed().as_secs_f64();
        return finish(&name, result, n, runtime);
    }

    if let Err(e) = guarded(&name, || adapter.begin_fit(data.fit, data.validation, seed)) {
        log::warn!("{name}: fit setup failed: {e}");
        return zero_filled(n, 0.0);
    }
    // A model only counts if it existed at a check inside the budget; a step
    // that overruns cannot rescue an adapter that had nothing before it.
    let started = Instant::now();
    let mut usable = false;
    loop {
        let done = match guarded(&name, || adapter.train_step()) {
            Ok(done) => done,
            Err(e) => {
                log::warn!("{name}: training step failed: {e}");
                return zero_filled(n, started.elapsed().as_secs_f64());
            }
        };
        let over = budget_seconds.is_some_and(|b| started.elapsed().as_secs_f64() > b);
        if !over {
            usable = adapter.has_model();
        }
        if done || over {
            break;
        }
    }
    let runtime = started.elapsed().as_secs_f64();
    if !usable {
        log::info!("{name}: no usable model within {runtime:.2}s");
        return zero_filled(n, runtime);
    }
    let result = guarded(&name, || adapter.predict(data.input, &data.horizon));
    finish(&name, result, n, runtime)
}

fn finish(name: &str, result: Result<Vec<f64>>, n: usize, runtime: f64) -> RunOutcome {
    match result {
        Ok(p) if p.len() == n && p.iter().all(|v| v.is_finite()) => {
            RunOutcome { predictions: p, runtime_seconds: runtime, failed: false }
        }
        Ok(p) => {
            log::warn!("{name}: returned {} predictions (expected {n}) or non-finite values", p.len());
            zero_filled(n, runtime)
        }
        Err(e) => {
            log::warn!("{name}: prediction failed: {e}");
            zero_filled(n, runtime)
        }
    }
}

/// Scores predictions against the present targets; `None` if no target is present.
pub fn score(task: &EvalTask, data: &TaskData<'_>, algorithm: &str, seed: u64, outcome: &RunOutcome) -> Result<Option<ResultRecord>> {
    let (pred, actual): (Vec<f64>, Vec<f64>) = outcome
        .predictions
        .iter()
        .zip(data.targets)
        .filter(|(_, o)| o.present)
        .map(|(&p, o)| (p, o.value))
        .unzip();
    if actual.is_empty() {
        return Ok(None);
    }
    let m = compute_metrics(&pred, &actual)?;
    Ok(Some(ResultRecord {
        dataset: task.dataset.clone(),
        series_id: task.series_id.clone(),
        algorithm: algorithm.to_string(),
        budget_kind: task.budget.kind,
        budget_value: task.budget.value,
        prediction_length: task.prediction_length,
        seed,
        mse: m.mse,
        mae: m.mae,
        mape: m.mape,
        mspe: m.mspe,
        runtime_seconds: outcome.runtime_seconds,
        failed: outcome.failed,
    }))
}

pub fn run_task(adapter: &mut dyn Forecaster, dataset: &Dataset, task: &EvalTask, seed: u64) -> Result<Option<ResultRecord>> {
    let series = dataset
        .series
        .get(task.series_index)
        .ok_or_else(|| Error::InvalidArgument(format!("task refers to missing series {}", task.series_index)))?;
    let data = task.data(series);
    let budget = match task.budget.kind {
        BudgetKind::Time => Some(task.budget.value),
        BudgetKind::Data => None,
    };
    let outcome = run_with_time_budget(adapter, &data, budget, seed);
    let record = score(task, &data, adapter.name(), seed, &outcome)?;
    if record.is_none() {
        log::warn!("{}/{}: no present targets, task skipped", task.dataset, task.series_id);
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunnerOptions {
    pub seed: u64,
    /// Run clonable algorithms in parallel. Time-budgeted tasks always run serially.
    pub parallel: bool,
}

/// Every algorithm on every task, records ordered by algorithm then task.
pub fn run_benchmark(
    dataset: &Dataset,
    tasks: &[EvalTask],
    adapters: &mut [Box<dyn Forecaster>],
    options: RunnerOptions,
) -> Result<Vec<ResultRecord>> {
    let mut records = Vec::new();
    for adapter in adapters.iter_mut() {
        let timed = tasks.iter().any(|t| t.budget.kind == BudgetKind::Time) && !adapter.is_zero_shot();
        let clone_ok = adapter.try_clone().is_some();
        let results: Vec<Option<ResultRecord>> = if options.parallel && clone_ok && !timed && !tasks.is_empty() {
            let chunk = tasks.len().div_ceil(rayon::current_num_threads().max(1));
            let mut workers: Vec<Box<dyn Forecaster>> =
                tasks.chunks(chunk).map(|_| adapter.try_clone().expect("clonable")).collect();
            let parts: Vec<Vec<Option<ResultRecord>>> = workers
                .par_iter_mut()
                .zip(tasks.par_chunks(chunk))
                .map(|(w, ts)| ts.iter().map(|t| run_task(w.as_mut(), dataset, t, options.seed)).collect())
                .collect::<Result<_>>()?;
            parts.concat()
        } else {
            tasks.iter().map(|t| run_task(adapter.as_mut(), dataset, t, options.seed)).collect::<Result<_>>()?
        };
        records.extend(results.into_iter().flatten());
    }
    Ok(records)
}
