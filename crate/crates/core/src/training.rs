//! Prior fitting: sample synthetic tasks, minimise the scaled squared error
//! against the noise-free target, update with Adam.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward, forward, forward_cached, tokenize, ModelConfig, ModelParams, Task, TokenInputs};
use crate::prior::{generate_corpus, task_at, PriorHyperparams, SyntheticSeries};
use crate::rng::{derive_rng, domain};
use crate::scaling::{self, ScalerKind};
use crate::timebase::Frequency;

/// Tasks per gradient-accumulation chunk. Chunks are reduced in a fixed
/// order, so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub noise_removal: bool,
    pub scaler_kind: ScalerKind,
    pub m_noise_scale: f64,
    pub seed: u64,
    pub series_per_frequency: usize,
    pub series_length: usize,
    pub window: usize,
    pub max_horizon: usize,
    pub frequencies: Vec<Frequency>,
    /// Share of generated series held out for validation.
    pub validation_fraction: f64,
    pub validation_tasks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            steps_per_epoch: 200,
            epochs: 20,
            noise_removal: true,
            scaler_kind: ScalerKind::Robust,
            m_noise_scale: 1.0,
            seed: 0,
            series_per_frequency: 2000,
            series_length: 200,
            window: 100,
            max_horizon: 10,
            frequencies: Frequency::ALL.to_vec(),
            validation_fraction: 0.05,
            validation_tasks: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.window == 0 || self.max_horizon == 0 {
            return Err(Error::InvalidArgument("window and max horizon must be positive".into()));
        }
        if self.series_length < self.window {
            return Err(Error::SeriesTooShort { len: self.series_length, window: self.window });
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation fraction must be in [0, 1)".into()));
        }
        if self.frequencies.is_empty() || self.series_per_frequency == 0 {
            return Err(Error::InvalidArgument("no training series requested".into()));
        }
        Ok(())
    }
}

/// A task reduced to what the loss needs.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub tokens: TokenInputs,
    pub target: f64,
    pub divisor: f64,
}

pub fn prepare_task(task: &Task, scaler_kind: ScalerKind, noise_removal: bool) -> Result<PreparedTask> {
    let values: Vec<f64> = task.input.iter().map(|o| o.value).collect();
    let mask: Vec<bool> = task.input.iter().map(|o| o.present).collect();
    let scaler = scaling::fit(scaler_kind, &values, &mask)?;
    let raw_target = if noise_removal {
        task.target_noiseless.ok_or(Error::MissingNoiselessTarget)?
    } else {
        task.target_observed
    };
    let tokens = tokenize(&task.input, task.query_date, &scaler)?;
    let divisor = tokens.max_abs_value().max(1.0).powi(2);
    Ok(PreparedTask { target: scaler.transform(raw_target), tokens, divisor })
}

/// `(ŷ − ỹ)² / max(1, max|x̃|)²` in scaled units.
pub fn task_loss(params: &ModelParams, task: &Task, scaler_kind: ScalerKind, noise_removal: bool) -> Result<f64> {
    prepared_loss(params, &prepare_task(task, scaler_kind, noise_removal)?)
}

pub fn prepared_loss(params: &ModelParams, task: &PreparedTask) -> Result<f64> {
    let y = forward(params, &task.tokens)?;
    Ok((y - task.target).powi(2) / task.divisor)
}

/// Loss of one task; its gradient is added into `grad`.
pub fn loss_and_grad(params: &ModelParams, task: &PreparedTask, grad: &mut ModelParams) -> Result<f64> {
    let (y, cache) = forward_cached(params, &task.tokens)?;
    let err = y - task.target;
    backward(params, &task.tokens, &cache, 2.0 * err / task.divisor, grad);
    Ok(err * err / task.divisor)
}

/// Mean loss over `tasks` and its gradient.
pub fn batch_loss_and_grad(params: &ModelParams, tasks: &[PreparedTask]) -> Result<(f64, ModelParams)> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let partials: Vec<(f64, ModelParams)> = tasks
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = ModelParams::zeros(&params.config)?;
            let mut loss = 0.0;
            for t in chunk {
                loss += loss_and_grad(params, t, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.add_scaled(&g, 1.0);
    }
    let n = tasks.len() as f64;
    grad.scale(1.0 / n);
    Ok((loss / n, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(config: &ModelConfig, learning_rate: f64) -> Result<Self> {
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ModelParams::zeros(config)?,
            v: ModelParams::zeros(config)?,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let g = grad.tensors();
        let tensors = params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for (((p, m), v), g) in tensors.zip(g) {
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                p[i] -= self.learning_rate * update;
            }
        }
    }
}

/// Single-writer optimisation state.
pub struct Trainer {
    pub params: ModelParams,
    adam: Adam,
    steps: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, learning_rate: f64) -> Result<Self> {
        let adam = Adam::new(&params.config, learning_rate)?;
        Ok(Self { params, adam, steps: 0 })
    }

    /// One Adam step on the mean loss of `batch`; returns that loss.
    /// Non-finite losses abort before the parameters are touched.
    pub fn step(&mut self, batch: &[PreparedTask]) -> Result<f64> {
        let (loss, grad) = batch_loss_and_grad(&self.params, batch)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: 0, step: self.steps, loss });
        }
        self.adam.step(&mut self.params, &grad);
        self.steps += 1;
        Ok(loss)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }
}

/// Mean validation loss in robust-scaled units, whatever scaler the model
/// itself uses: predictions are mapped back to original units and then
/// standardized with the robust statistics of the input window, and compared
/// against the noise-free target. Parameters are only read.
pub fn validation_loss(params: &ModelParams, tasks: &[Task]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let losses: Vec<f64> = tasks
        .par_iter()
        .map(|task| {
            let values: Vec<f64> = task.input.iter().map(|o| o.value).collect();
            let mask: Vec<bool> = task.input.iter().map(|o| o.present).collect();
            let own = scaling::fit(params.config.scaler, &values, &mask)?;
            let robust = scaling::fit_robust(&values, &mask)?;
            let tokens = tokenize(&task.input, task.query_date, &own)?;
            let prediction = own.inverse(forward(params, &tokens)?);
            let target = robust.transform(task.target_noiseless.unwrap_or(task.target_observed));
            let divisor = values
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| robust.transform(v).abs())
                .fold(1.0f64, f64::max)
                .powi(2);
            Ok((robust.standardize(prediction) - target).powi(2) / divisor)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_loss)
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// Rows `epoch,train_loss,val_loss,seconds`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "val_loss", "seconds"])?;
        for e in &self.epochs {
            out.serialize((e.epoch, e.train_loss, e.val_loss, e.seconds))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Synthetic training corpus split by series index into train and validation.
pub struct Corpus {
    pub train: Vec<SyntheticSeries>,
    pub validation: Vec<SyntheticSeries>,
}

impl Corpus {
    pub fn generate(prior: &PriorHyperparams, config: &TrainConfig) -> Result<Self> {
        let stride = if config.validation_fraction > 0.0 {
            (1.0 / config.validation_fraction).round().max(1.0) as usize
        } else {
            usize::MAX
        };
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for (fi, &freq) in config.frequencies.iter().enumerate() {
            let first = (fi * config.series_per_frequency) as u64;
            let series = generate_corpus(
                prior,
                freq,
                config.series_per_frequency,
                config.series_length,
                config.seed,
                first,
            )?;
            for (i, s) in series.into_iter().enumerate() {
                let global = first as usize + i;
                if stride != usize::MAX && global % stride == stride - 1 {
                    validation.push(s);
                } else {
                    train.push(s);
                }
            }
        }
        if train.is_empty() {
            return Err(Error::InvalidArgument("no training series after the validation split".into()));
        }
        Ok(Self { train, validation })
    }
}

/// Draws `count` tasks uniformly over series, window position and horizon.
pub fn sample_tasks<R: Rng + ?Sized>(
    pool: &[SyntheticSeries],
    count: usize,
    window: usize,
    max_horizon: usize,
    rng: &mut R,
) -> Result<Vec<Task>> {
    (0..count)
        .map(|_| {
            let s = &pool[rng.random_range(0..pool.len())];
            let start = rng.random_range(0..=s.len() - window);
            let h = rng.random_range(1..=max_horizon);
            task_at(s, start, window, h, rng)
        })
        .collect()
}

/// `count` fixed tasks drawn from a freshly generated corpus.
pub fn fixed_tasks(prior: &PriorHyperparams, cfg: &TrainConfig, count: usize) -> Result<Vec<Task>> {
    cfg.validate()?;
    let prior = PriorHyperparams { m_noise_scale: cfg.m_noise_scale, ..*prior };
    let corpus = Corpus::generate(&prior, cfg)?;
    let mut rng = derive_rng(cfg.seed, domain::VALIDATION, 1);
    sample_tasks(&corpus.train, count, cfg.window, cfg.max_horizon, &mut rng)
}

/// Repeated Adam steps on one fixed batch. Stops after `max_steps` or once
/// the loss drops below `target`; returns the loss before every step taken.
pub fn fit_fixed_batch(
    params: ModelParams,
    batch: &[PreparedTask],
    learning_rate: f64,
    max_steps: usize,
    target: Option<f64>,
) -> Result<(ModelParams, Vec<f64>)> {
    let mut trainer = Trainer::new(params, learning_rate)?;
    let mut losses = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let loss = trainer.step(batch)?;
        losses.push(loss);
        if target.is_some_and(|t| loss < t) {
            break;
        }
    }
    Ok((trainer.into_params(), losses))
}

/// Full prior-fitting run. Deterministic for a given seed and configuration.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    prior: &PriorHyperparams,
) -> Result<(ModelParams, TrainHistory)> {
    train_config.validate()?;
    let prior = PriorHyperparams { m_noise_scale: train_config.m_noise_scale, ..*prior };
    prior.validate()?;
    let config = ModelConfig { scaler: train_config.scaler_kind, ..*model_config };
    let params = ModelParams::init(&config, train_config.seed)?;
    let corpus = Corpus::generate(&prior, train_config)?;
    train_on_corpus(params, &corpus, train_config)
}

pub fn train_on_corpus(
    params: ModelParams,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let mut trainer = Trainer::new(params, cfg.learning_rate)?;
    let val_pool = if corpus.validation.is_empty() { &corpus.train } else { &corpus.validation };
    let mut val_rng = derive_rng(cfg.seed, domain::VALIDATION, 0);
    let val_tasks = sample_tasks(val_pool, cfg.validation_tasks.max(1), cfg.window, cfg.max_horizon, &mut val_rng)?;

    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = derive_rng(cfg.seed, domain::EPOCH, epoch as u64);
        let tasks = sample_tasks(
            &corpus.train,
            cfg.batch_size * cfg.steps_per_epoch,
            cfg.window,
            cfg.max_horizon,
            &mut rng,
        )?;
        let mut total = 0.0;
        for (step, batch) in tasks.chunks(cfg.batch_size).enumerate() {
            let prepared: Vec<PreparedTask> = batch
                .iter()
                .map(|t| prepare_task(t, cfg.scaler_kind, cfg.noise_removal))
                .collect::<Result<_>>()?;
            total += trainer.step(&prepared).map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch, step, loss },
                other => other,
            })?;
        }
        let train_loss = if cfg.steps_per_epoch > 0 { total / cfg.steps_per_epoch as f64 } else { 0.0 };
        let val_loss = validation_loss(&trainer.params, &val_tasks)?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} ({seconds:.1}s)");
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, seconds });
    }
    let mut params = trainer.into_params();
    params.round_to_f32();
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use crate::timebase::Date;

    fn toy_task(offset: f64) -> Task {
        let start = Date::new(2022, 5, 2).unwrap();
        let input = (0..12)
            .map(|i| Observation::new(start.add_days(i), offset + (i as f64 * 0.9).cos()))
            .collect();
        Task {
            input,
            query_date: start.add_days(15),
            target_observed: offset + 0.4,
            target_noiseless: Some(offset + 0.3),
        }
    }

    fn small() -> ModelConfig {
        ModelConfig { d_model: 8, ff1_mult: 4, ff2_mult: 2, ..Default::default() }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut p = ModelParams::zeros(&small()).unwrap();
        let prepared = prepare_task(&toy_task(3.0), ScalerKind::Robust, true).unwrap();
        p.head.bias[0] = prepared.target;
        assert_eq!(prepared_loss(&p, &prepared).unwrap(), 0.0);
    }

    #[test]
    fn divisor_bounded_by_clipping() {
        let mut t = toy_task(0.0);
        t.input[3].value = 1e9;
        let prepared = prepare_task(&t, ScalerKind::Robust, true).unwrap();
        assert!((1.0..=9.0).contains(&prepared.divisor));
    }

    #[test]
    fn missing_noiseless_target() {
        let mut t = toy_task(0.0);
        t.target_noiseless = None;
        assert!(matches!(prepare_task(&t, ScalerKind::Robust, true), Err(Error::MissingNoiselessTarget)));
        assert!(prepare_task(&t, ScalerKind::Robust, false).is_ok());
    }

    #[test]
    fn batch_loss_is_mean_of_task_losses() {
        let p = ModelParams::init(&small(), 4).unwrap();
        let tasks: Vec<PreparedTask> = (0..19)
            .map(|i| prepare_task(&toy_task(i as f64), ScalerKind::Robust, true).unwrap())
            .collect();
        let (batch, _) = batch_loss_and_grad(&p, &tasks).unwrap();
        let mean = tasks.iter().map(|t| prepared_loss(&p, t).unwrap()).sum::<f64>() / 19.0;
        assert!((batch - mean).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let p = ModelParams::init(&small(), 4).unwrap();
        let mut trainer = Trainer::new(p.clone(), 0.0).unwrap();
        let tasks = vec![prepare_task(&toy_task(1.0), ScalerKind::Robust, true).unwrap()];
        trainer.step(&tasks).unwrap();
        assert!(trainer.params.bitwise_eq(&p));
    }

    #[test]
    fn validation_does_not_mutate() {
        let p = ModelParams::init(&small(), 4).unwrap();
        let before = p.clone();
        let tasks: Vec<Task> = (0..5).map(|i| toy_task(i as f64)).collect();
        validation_loss(&p, &tasks).unwrap();
        assert!(p.bitwise_eq(&before));
    }

    #[test]
    fn robust_validation_matches_task_loss() {
        let p = ModelParams::init(&small(), 9).unwrap();
        let tasks: Vec<Task> = (0..6).map(|i| toy_task(i as f64 * 2.0)).collect();
        let direct = tasks.iter().map(|t| task_loss(&p, t, ScalerKind::Robust, true).unwrap()).sum::<f64>() / 6.0;
        let val = validation_loss(&p, &tasks).unwrap();
        assert!((direct - val).abs() < 1e-9 * (1.0 + direct));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { series_length: 50, window: 100, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::SeriesTooShort { .. })));
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tiny_run_is_deterministic() {
        let cfg = TrainConfig {
            batch_size: 4,
            steps_per_epoch: 3,
            epochs: 2,
            series_per_frequency: 6,
            series_length: 40,
            window: 20,
            validation_tasks: 8,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let prior = PriorHyperparams::default();
        let (a, ha) = train(&small(), &cfg, &prior).unwrap();
        let (b, hb) = train(&small(), &cfg, &prior).unwrap();
        assert!(a.bitwise_eq(&b));
        let losses = |h: &TrainHistory| h.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&ha), losses(&hb));
        assert_eq!(ha.epochs.len(), 2);
        let init = ModelParams::init(&small(), cfg.seed).unwrap();
        assert!(!a.bitwise_eq(&init));
    }
}
