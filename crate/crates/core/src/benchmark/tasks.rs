//! Evaluation task construction around an anchor index `T0`.
//!
//! With a data budget of `x` points the train slice is the `x` points ending
//! at `T0` (inclusive), of which the last `⌈x/10⌉` are held out for
//! validation. The test input is the `input_len` points after `T0` and the
//! targets are the `ℓ` points after that.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Series};
use super::records::BudgetKind;
use crate::error::{Error, Result};
use crate::model::Observation;
use crate::timebase::Date;

pub const INPUT_LEN: usize = 36;
pub const DEFAULT_ANCHOR: usize = 500;
/// History a time-budgeted algorithm may train on.
pub const TIME_BUDGET_HISTORY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub kind: BudgetKind,
    pub value: f64,
}

impl Budget {
    pub fn data(points: usize) -> Self {
        Self { kind: BudgetKind::Data, value: points as f64 }
    }

    pub fn time(seconds: f64) -> Self {
        Self { kind: BudgetKind::Time, value: seconds }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum Anchors {
    /// `T0 = 500` when the series permits, else the largest feasible index.
    #[default]
    Default,
    At(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub dataset: String,
    pub series_index: usize,
    pub series_id: String,
    pub anchor: usize,
    pub budget: Budget,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub input: Range<usize>,
    pub targets: Range<usize>,
    pub prediction_length: usize,
}

/// Views of one task over its series.
pub struct TaskData<'a> {
    pub fit: &'a [Observation],
    pub validation: &'a [Observation],
    pub input: &'a [Observation],
    pub targets: &'a [Observation],
    pub horizon: Vec<Date>,
}

impl EvalTask {
    pub fn data<'a>(&self, series: &'a Series) -> TaskData<'a> {
        let obs = &series.observations;
        let targets = &obs[self.targets.clone()];
        TaskData {
            fit: &obs[self.train.start..self.validation.start],
            validation: &obs[self.validation.clone()],
            input: &obs[self.input.clone()],
            targets,
            horizon: targets.iter().map(|o| o.date).collect(),
        }
    }
}

/// Largest feasible anchor no greater than `preferred`, if any.
pub fn feasible_anchor(len: usize, preferred: usize, input_len: usize, max_len: usize) -> Option<usize> {
    let needed = input_len + max_len + 1;
    (len >= needed).then(|| preferred.min(len - needed))
}

/// Validation carve-out of a data budget: `⌈x/10⌉`.
pub fn validation_len(budget: usize) -> usize {
    budget.div_ceil(10)
}

pub fn build_tasks(
    dataset: &Dataset,
    anchors: &Anchors,
    budgets: &[Budget],
    pred_lengths: &[usize],
    input_len: usize,
) -> Result<Vec<EvalTask>> {
    let max_len = *pred_lengths
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no prediction lengths".into()))?;
    if pred_lengths.contains(&0) || input_len == 0 {
        return Err(Error::InvalidArgument("prediction lengths and input length must be positive".into()));
    }
    let mut tasks = Vec::new();
    for (si, series) in dataset.series.iter().enumerate() {
        let len = series.len();
        let anchor_list: Vec<usize> = match anchors {
            Anchors::Default => match feasible_anchor(len, DEFAULT_ANCHOR, input_len, max_len) {
                Some(a) => vec![a],
                None => {
                    log::warn!("skipping {}/{}: {len} points is too short", dataset.name, series.id);
                    continue;
                }
            },
            Anchors::At(list) => list
                .iter()
                .copied()
                .filter(|&a| {
                    let ok = a + input_len + max_len < len;
                    if !ok {
                        log::warn!("skipping {}/{} anchor {a}: series has {len} points", dataset.name, series.id);
                    }
                    ok
                })
                .collect(),
        };
        for &t0 in &anchor_list {
            for budget in budgets {
                let history = match budget.kind {
                    BudgetKind::Data => budget.value as usize,
                    BudgetKind::Time => TIME_BUDGET_HISTORY.min(t0 + 1),
                };
                if history == 0 || history > t0 + 1 {
                    log::warn!(
                        "skipping {}/{} budget {}: only {} points before the anchor",
                        dataset.name,
                        series.id,
                        budget.value,
                        t0 + 1
                    );
                    continue;
                }
                let train = t0 + 1 - history..t0 + 1;
                let validation = train.end - validation_len(history)..train.end;
                for &l in pred_lengths {
                    tasks.push(EvalTask {
                        dataset: dataset.name.clone(),
                        series_index: si,
                        series_id: series.id.clone(),
                        anchor: t0,
                        budget: *budget,
                        train: train.clone(),
                        validation: validation.clone(),
                        input: t0 + 1..t0 + 1 + input_len,
                        targets: t0 + 1 + input_len..t0 + 1 + input_len + l,
                        prediction_length: l,
                    });
                }
            }
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::Frequency;

    fn dataset(len: usize) -> Dataset {
        let start = Date::new(2015, 1, 1).unwrap();
        Dataset {
            name: "d".into(),
            series: vec![Series {
                id: "s".into(),
                freq: Frequency::Daily,
                observations: (0..len).map(|i| Observation::new(start.add_days(i as i64), i as f64)).collect(),
            }],
        }
    }

    #[test]
    fn grid_size_and_indices() {
        let ds = dataset(700);
        let tasks = build_tasks(&ds, &Anchors::Default, &[Budget::data(50), Budget::data(500)], &[6, 48], INPUT_LEN).unwrap();
        assert_eq!(tasks.len(), 4);
        let t = &tasks[0];
        assert_eq!(t.anchor, 500);
        assert_eq!(t.train, 451..501);
        assert_eq!(t.validation.len(), 5);
        assert_eq!(t.input, 501..537);
        assert_eq!(t.targets, 537..543);
        let d = t.data(&ds.series[0]);
        assert_eq!(d.fit.len() + d.validation.len(), 50);
        assert_eq!(d.targets.first().unwrap().value, 537.0);
        assert_eq!(tasks[3].train.len(), 500);
        assert_eq!(tasks[3].targets, 537..585);
    }

    #[test]
    fn short_series_use_largest_anchor_or_skip() {
        let tasks = build_tasks(&dataset(200), &Anchors::Default, &[Budget::data(50)], &[10], INPUT_LEN).unwrap();
        assert_eq!(tasks[0].anchor, 200 - 47);
        assert_eq!(tasks[0].targets.end, 200);
        assert!(build_tasks(&dataset(40), &Anchors::Default, &[Budget::data(5)], &[10], INPUT_LEN).unwrap().is_empty());
        // Budget larger than the history is skipped.
        assert!(build_tasks(&dataset(200), &Anchors::Default, &[Budget::data(500)], &[10], INPUT_LEN).unwrap().is_empty());
    }

    #[test]
    fn time_budget_history() {
        let tasks = build_tasks(&dataset(900), &Anchors::At(vec![600]), &[Budget::time(1.0)], &[6], INPUT_LEN).unwrap();
        assert_eq!(tasks[0].train, 101..601);
        assert_eq!(tasks[0].validation.len(), 50);
    }

    #[test]
    fn carve_out() {
        assert_eq!(validation_len(50), 5);
        assert_eq!(validation_len(55), 6);
        assert_eq!(validation_len(1), 1);
    }
}
