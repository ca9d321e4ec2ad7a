//! Wins and mean ranks per algorithm.
//!
//! A configuration is one (dataset, series, prediction length, seed, budget
//! kind, budget value). Within a configuration algorithms are ranked by the
//! chosen metric, ascending; exactly equal values share the average of their
//! ranks. Every algorithm within [`WIN_TOLERANCE`] of the best value wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Metric;
use super::records::{BudgetKind, ResultRecord};
use crate::error::{Error, Result};

pub const WIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Dataset,
    Series,
    PredictionLength,
    Seed,
    BudgetKind,
    BudgetValue,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Dataset,
        Dimension::Series,
        Dimension::PredictionLength,
        Dimension::Seed,
        Dimension::BudgetKind,
        Dimension::BudgetValue,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Dataset => "dataset",
            Dimension::Series => "series",
            Dimension::PredictionLength => "prediction_length",
            Dimension::Seed => "seed",
            Dimension::BudgetKind => "budget_kind",
            Dimension::BudgetValue => "budget_value",
        }
    }

    fn value_of(&self, r: &ResultRecord) -> String {
        match self {
            Dimension::Dataset => r.dataset.clone(),
            Dimension::Series => r.series_id.clone(),
            Dimension::PredictionLength => r.prediction_length.to_string(),
            Dimension::Seed => r.seed.to_string(),
            Dimension::BudgetKind => r.budget_kind.to_string(),
            Dimension::BudgetValue => r.budget_value.to_string(),
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown grouping dimension `{s}`")))
    }
}

/// Group label: the grouped dimensions and their values. Empty means "all".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey(pub Vec<(Dimension, String)>);

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("all");
        }
        let parts: Vec<String> = self.0.iter().map(|(d, v)| format!("{}={v}", d.as_str())).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub wins: usize,
    pub mean_rank: f64,
    pub configurations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub metric: Metric,
    pub algorithms: Vec<String>,
    pub groups: BTreeMap<GroupKey, BTreeMap<String, AlgoSummary>>,
    /// Configurations dropped because an algorithm had no record.
    pub excluded: usize,
}

/// One flattened line of an [`Aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub algorithm: String,
    pub wins: usize,
    pub mean_rank: f64,
    pub configurations: usize,
}

impl Aggregate {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.groups
            .iter()
            .flat_map(|(g, algs)| {
                algs.iter().map(move |(a, s)| SummaryRow {
                    group: g.to_string(),
                    algorithm: a.clone(),
                    wins: s.wins,
                    mean_rank: s.mean_rank,
                    configurations: s.configurations,
                })
            })
            .collect()
    }

    /// Total configurations counted, summed over groups.
    pub fn configurations(&self) -> usize {
        self.groups.values().filter_map(|a| a.values().next()).map(|s| s.configurations).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ConfigKey {
    dataset: String,
    series: String,
    prediction_length: usize,
    seed: u64,
    budget_kind: BudgetKind,
    budget_bits: u64,
}

impl ConfigKey {
    fn of(r: &ResultRecord) -> Self {
        Self {
            dataset: r.dataset.clone(),
            series: r.series_id.clone(),
            prediction_length: r.prediction_length,
            seed: r.seed,
            budget_kind: r.budget_kind,
            budget_bits: r.budget_value.to_bits(),
        }
    }
}

/// Fractional ranks (1-based) of `values`, ties averaged.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j share ranks i+1..=j.
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

/// Aggregates wins and mean ranks by `metric`, grouped by `group_by`.
/// When a configuration holds several records of one algorithm the last
/// one counts.
pub fn aggregate(records: &[ResultRecord], group_by: &[Dimension], metric: Metric) -> Aggregate {
    let algorithms: Vec<String> =
        records.iter().map(|r| r.algorithm.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut configs: BTreeMap<ConfigKey, BTreeMap<&str, &ResultRecord>> = BTreeMap::new();
    for r in records {
        configs.entry(ConfigKey::of(r)).or_default().insert(&r.algorithm, r);
    }
    let mut dims: Vec<Dimension> = group_by.to_vec();
    dims.sort();
    dims.dedup();

    let mut rank_sums: BTreeMap<GroupKey, BTreeMap<String, AlgoSummary>> = BTreeMap::new();
    let mut excluded = 0;
    for (key, by_alg) in &configs {
        if by_alg.len() != algorithms.len() {
            log::warn!(
                "excluding {}/{} (length {}, {} {}): {} of {} algorithms present",
                key.dataset,
                key.series,
                key.prediction_length,
                key.budget_kind,
                f64::from_bits(key.budget_bits),
                by_alg.len(),
                algorithms.len()
            );
            excluded += 1;
            continue;
        }
        let any = by_alg.values().next().expect("non-empty");
        let group = GroupKey(dims.iter().map(|d| (*d, d.value_of(any))).collect());
        let values: Vec<f64> = algorithms.iter().map(|a| by_alg[a.as_str()].metrics().get(metric)).collect();
        let ranks = fractional_ranks(&values);
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let entry = rank_sums.entry(group).or_default();
        for ((alg, &v), &rank) in algorithms.iter().zip(&values).zip(&ranks) {
            let s = entry.entry(alg.clone()).or_default();
            s.configurations += 1;
            s.mean_rank += rank;
            if v - best <= WIN_TOLERANCE {
                s.wins += 1;
            }
        }
    }
    for summaries in rank_sums.values_mut() {
        for s in summaries.values_mut() {
            s.mean_rank /= s.configurations as f64;
        }
    }
    Aggregate { metric, algorithms, groups: rank_sums, excluded }
}
