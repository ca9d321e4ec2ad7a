//! Held-out synthetic series scored in the same harness as real datasets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::adapter::{BaselineForecaster, Forecaster, ModelForecaster};
use super::aggregate::{aggregate, Aggregate};
use super::dataset::{Dataset, Series};
use super::metrics::Metric;
use super::records::ResultRecord;
use super::runner::{run_benchmark, RunnerOptions};
use super::tasks::{build_tasks, Anchors, Budget};
use crate::baselines::Baseline;
use crate::error::Result;
use crate::model::{ModelParams, Observation};
use crate::prior::{generate_series, random_start_date, PriorHyperparams};
use crate::rng::{derive_rng, domain};
use crate::timebase::Frequency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvalConfig {
    pub n_series: usize,
    pub m_noise_scale: f64,
    pub input_len: usize,
    pub max_horizon: usize,
    pub seed: u64,
    /// Draws whose largest seasonal amplitude falls below this are redrawn.
    pub min_amplitude: f64,
    pub frequencies: Vec<Frequency>,
}

impl Default for SyntheticEvalConfig {
    fn default() -> Self {
        Self {
            n_series: 200,
            m_noise_scale: 0.25,
            input_len: 36,
            max_horizon: 10,
            seed: 1_000_003,
            min_amplitude: 0.1,
            frequencies: Frequency::ALL.to_vec(),
        }
    }
}

/// Series `i` uses frequency `i mod |frequencies|` and its own RNG stream.
/// Each series has one leading point before the input so that the task
/// anchor sits at index 0.
pub fn synthetic_dataset(prior: &PriorHyperparams, cfg: &SyntheticEvalConfig) -> Result<Dataset> {
    let prior = PriorHyperparams { m_noise_scale: cfg.m_noise_scale, ..*prior };
    let length = 1 + cfg.input_len + cfg.max_horizon;
    let series = (0..cfg.n_series)
        .map(|i| {
            let freq = cfg.frequencies[i % cfg.frequencies.len()];
            let mut rng = derive_rng(cfg.seed, domain::EVAL, i as u64);
            loop {
                let start = random_start_date(&mut rng);
                let s = generate_series(&prior, freq, start, length, &mut rng)?;
                let amp = s.params.seasons.iter().map(|c| c.amplitude).fold(0.0, f64::max);
                if amp >= cfg.min_amplitude {
                    return Ok(Series {
                        id: format!("{freq}-{i}"),
                        freq,
                        observations: s.dates.iter().zip(&s.observed).map(|(&d, &v)| Observation::new(d, v)).collect(),
                    });
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { name: "synthetic".into(), series })
}

/// Records of the model, Last and Mean on every held-out series.
pub fn synthetic_zero_shot_records(
    params: Arc<ModelParams>,
    prior: &PriorHyperparams,
    cfg: &SyntheticEvalConfig,
) -> Result<Vec<ResultRecord>> {
    let ds = synthetic_dataset(prior, cfg)?;
    let tasks = build_tasks(&ds, &Anchors::At(vec![0]), &[Budget::data(1)], &[cfg.max_horizon], cfg.input_len)?;
    let mut adapters: Vec<Box<dyn Forecaster>> = vec![
        Box::new(ModelForecaster::new("model", params)),
        Box::new(BaselineForecaster(Baseline::Last)),
        Box::new(BaselineForecaster(Baseline::Mean)),
    ];
    run_benchmark(&ds, &tasks, &mut adapters, RunnerOptions { seed: cfg.seed, parallel: true })
}

pub fn synthetic_zero_shot_wins(
    params: Arc<ModelParams>,
    prior: &PriorHyperparams,
    cfg: &SyntheticEvalConfig,
) -> Result<Aggregate> {
    Ok(aggregate(&synthetic_zero_shot_records(params, prior, cfg)?, &[], Metric::Mse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = SyntheticEvalConfig { n_series: 9, ..Default::default() };
        let a = synthetic_dataset(&PriorHyperparams::default(), &cfg).unwrap();
        assert_eq!(a.series.len(), 9);
        assert!(a.series.iter().all(|s| s.len() == 47));
        assert_eq!(a.series[4].freq, Frequency::Weekly);
        assert_eq!(a, synthetic_dataset(&PriorHyperparams::default(), &cfg).unwrap());
    }

    #[test]
    fn records_cover_every_series() {
        let cfg = SyntheticEvalConfig { n_series: 6, ..Default::default() };
        let params = Arc::new(ModelParams::init(&crate::model::ModelConfig::with_d_model(8), 0).unwrap());
        let agg = synthetic_zero_shot_wins(params, &PriorHyperparams::default(), &cfg).unwrap();
        let all = agg.groups.values().next().unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.values().all(|s| s.configurations == 6));
    }
}
