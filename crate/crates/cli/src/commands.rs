use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use synthcast_core::baselines::Baseline;
use synthcast_core::benchmark::{
    append_records, build_tasks, load_dataset, load_records, run_benchmark, write_report, Anchors, BaselineForecaster,
    Budget, Dimension, Forecaster, Metric, ModelForecaster, RunnerOptions, SubprocessForecaster,
};
use synthcast_core::model::{load_weights, predict, save_weights, ModelConfig, ModelParams};
use synthcast_core::prior::{generate_corpus, PriorHyperparams};
use synthcast_core::scaling::ScalerKind;
use synthcast_core::timebase::{date_add, Frequency};
use synthcast_core::training::{self, TrainConfig};

use crate::config::Settings;
use crate::manifest::{manifest_path, now_unix, RunManifest};
use crate::{BenchmarkArgs, Cli, Command, OnOff, PredictArgs, ReportArgs, SynthGenArgs, TrainArgs, UsageError};

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| usage(format!("invalid {what} `{raw}`: {e}")))
}

fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

struct Ctx {
    out_dir: Option<PathBuf>,
    settings: Settings,
    started: f64,
}

impl Ctx {
    fn output(&self, p: PathBuf) -> PathBuf {
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }

    fn prepare_output(&self, p: PathBuf) -> Result<PathBuf> {
        let p = self.output(p);
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.started, self.settings.resolved().clone())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    let mut ctx = Ctx { out_dir: cli.out_dir, settings, started: now_unix() };
    match cli.command {
        Command::SynthGen(a) => synth_gen(&mut ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Predict(a) => predict_cmd(&mut ctx, a),
        Command::Benchmark(a) => benchmark(&mut ctx, a),
        Command::Report(a) => report(&mut ctx, a),
    }
}

fn synth_gen(ctx: &mut Ctx, a: SynthGenArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let count = s.get(a.series, "series", 100usize)?;
    let length = s.get(a.length, "length", 200usize)?;
    let freq: Frequency = parse(&s.get(a.freq, "freq", "daily".to_string())?, "frequency")?;
    let seed = s.get(a.seed, "seed", 0u64)?;
    let noise_scale = s.get(a.noise_scale, "noise_scale", 1.0f64)?;
    let window = s.optional(a.window, "window")?;
    let out = s.get(a.out, "out", PathBuf::from("synthetic.csv"))?;
    if let Some(w) = window {
        if length < w {
            return Err(usage(format!("series length {length} is shorter than the training window {w}")));
        }
    }
    let prior = PriorHyperparams { m_noise_scale: noise_scale, ..Default::default() };
    prior.validate().map_err(|e| usage(e.to_string()))?;

    let out = ctx.prepare_output(out)?;
    let series = generate_corpus(&prior, freq, count, length, seed, 0)?;
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(["series", "frequency", "t", "date", "underlying", "noise", "observed"])?;
    for (i, s) in series.iter().enumerate() {
        for t in 0..s.len() {
            w.write_record([
                i.to_string(),
                freq.to_string(),
                t.to_string(),
                s.dates[t].to_string(),
                s.underlying[t].to_string(),
                s.noise[t].to_string(),
                s.observed[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    log::info!("wrote {count} {freq} series of length {length} to {}", out.display());
    let mut m = ctx.manifest("synth-gen");
    m.artifact(&out);
    m.write(&manifest_path(&out))?;
    Ok(())
}

fn train(ctx: &mut Ctx, a: TrainArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let out = s.optional(a.out, "out")?.ok_or_else(|| usage("--out <weights file> is required"))?;
    let defaults = TrainConfig::default();
    let model_defaults = ModelConfig::default();
    let scaler: ScalerKind = parse(&s.get(a.scaler, "scaler", "robust".to_string())?, "scaler")?;
    let model_config = ModelConfig {
        d_model: s.get(a.d_model, "d_model", model_defaults.d_model)?,
        n_blocks: s.get(a.blocks, "blocks", model_defaults.n_blocks)?,
        n_heads: s.get(a.heads, "heads", model_defaults.n_heads)?,
        max_input_len: s.get(a.max_input_len, "max_input_len", model_defaults.max_input_len)?,
        scaler,
        ..model_defaults
    };
    let cfg = TrainConfig {
        learning_rate: s.get(a.lr, "lr", defaults.learning_rate)?,
        batch_size: s.get(a.batch_size, "batch_size", defaults.batch_size)?,
        steps_per_epoch: s.get(a.steps_per_epoch, "steps_per_epoch", defaults.steps_per_epoch)?,
        epochs: s.get(a.epochs, "epochs", defaults.epochs)?,
        noise_removal: s.get(a.noise_removal, "noise_removal", OnOff::On)? == OnOff::On,
        scaler_kind: scaler,
        m_noise_scale: s.get(a.noise_scale, "noise_scale", defaults.m_noise_scale)?,
        seed: s.get(a.seed, "seed", defaults.seed)?,
        series_per_frequency: s.get(a.series_per_frequency, "series_per_frequency", defaults.series_per_frequency)?,
        series_length: s.get(a.length, "length", defaults.series_length)?,
        window: s.get(a.window, "window", defaults.window)?,
        max_horizon: s.get(a.max_horizon, "max_horizon", defaults.max_horizon)?,
        validation_tasks: s.get(a.validation_tasks, "validation_tasks", defaults.validation_tasks)?,
        ..defaults
    };
    let overfit = s.optional(a.overfit_tasks, "overfit_tasks")?;
    let overfit_steps = s.get(a.overfit_steps, "overfit_steps", 2000usize)?;
    let history_path = s.optional(a.history, "history")?;
    model_config.validate().map_err(|e| usage(e.to_string()))?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if cfg.window > model_config.max_input_len {
        return Err(usage(format!(
            "window {} exceeds the model's max input length {}",
            cfg.window, model_config.max_input_len
        )));
    }
    let out = ctx.prepare_output(out)?;
    let prior = PriorHyperparams::default();
    let mut m = ctx.manifest("train");

    if let Some(n) = overfit {
        let tasks = training::fixed_tasks(&prior, &cfg, n)?;
        let batch = tasks
            .iter()
            .map(|t| training::prepare_task(t, cfg.scaler_kind, cfg.noise_removal))
            .collect::<synthcast_core::Result<Vec<_>>>()?;
        let init = ModelParams::init(&model_config, cfg.seed)?;
        let (params, losses) = training::fit_fixed_batch(init, &batch, cfg.learning_rate, overfit_steps, Some(1e-3))?;
        let final_loss = batch.iter().map(|t| training::prepared_loss(&params, t)).sum::<synthcast_core::Result<f64>>()?
            / batch.len() as f64;
        println!("fixed-task fit: {} steps, final loss {final_loss:.3e}", losses.len());
        let mut params = params;
        params.round_to_f32();
        save_weights(&params, &out)?;
        m.results.insert("steps".into(), (losses.len() as i64).into());
        m.results.insert("final_loss".into(), final_loss.into());
    } else {
        let (params, history) = training::train(&model_config, &cfg, &prior)?;
        save_weights(&params, &out)?;
        let history_path = match history_path {
            Some(p) => ctx.prepare_output(p)?,
            None => out.with_file_name(format!("{}.history.csv", out.file_name().unwrap_or_default().to_string_lossy())),
        };
        history.write_csv(std::fs::File::create(&history_path)?)?;
        m.artifact(&history_path);
        if let (Some(tl), Some(vl)) = (history.final_train_loss(), history.final_val_loss()) {
            println!("final train loss {tl:.5}, validation loss {vl:.5}");
            m.results.insert("final_train_loss".into(), tl.into());
            m.results.insert("final_val_loss".into(), vl.into());
        }
    }
    m.artifact(&out);
    m.write(&manifest_path(&out))?;
    Ok(())
}

fn predict_cmd(ctx: &mut Ctx, a: PredictArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let weights = s.optional(a.weights, "weights")?.ok_or_else(|| usage("--weights is required"))?;
    let input = s.optional(a.input, "input")?.ok_or_else(|| usage("--input is required"))?;
    let horizon = s.get(a.horizon, "horizon", 1usize)?;
    let freq = s.optional(a.freq, "freq")?.map(|f| parse::<Frequency>(&f, "frequency")).transpose()?;
    let out = s.get(a.out, "out", PathBuf::from("forecast.csv"))?;
    if horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    let params = load_weights(&weights).with_context(|| format!("loading {}", weights.display()))?;
    let ds = load_dataset(&input, freq).with_context(|| format!("loading {}", input.display()))?;
    let out = ctx.prepare_output(out)?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["series", "date", "prediction"])?;
    for series in &ds.series {
        let last = series.observations.last().context("empty series")?.date;
        let dates: Vec<_> = (1..=horizon as u32).map(|k| date_add(last, k, series.freq)).collect();
        let preds = predict(&params, &series.observations, &dates).with_context(|| format!("series {}", series.id))?;
        for (d, p) in dates.iter().zip(preds) {
            w.write_record([series.id.clone(), d.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    log::info!("wrote {horizon} predictions per series to {}", out.display());
    let mut m = ctx.manifest("predict");
    m.artifact(&out);
    m.write(&manifest_path(&out))?;
    Ok(())
}

fn parse_adapter(spec: &str, zero_shot: bool) -> Result<SubprocessForecaster> {
    let (name, command) = spec.split_once('=').ok_or_else(|| usage(format!("adapter `{spec}` must be name=program [args..]")))?;
    let mut parts = command.split_whitespace().map(str::to_string);
    let program = parts.next().ok_or_else(|| usage(format!("adapter `{name}` has no program")))?;
    Ok(SubprocessForecaster::new(name.trim(), program, parts.collect(), zero_shot))
}

fn benchmark(ctx: &mut Ctx, a: BenchmarkArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let datasets: Vec<PathBuf> = s.get(non_empty(a.datasets), "datasets", Vec::new())?;
    let freq = s.optional(a.freq, "freq")?.map(|f| parse::<Frequency>(&f, "frequency")).transpose()?;
    let weights = s.optional(a.weights, "weights")?;
    let selected: Vec<String> = s.get(non_empty(a.algorithms), "algorithms", Vec::new())?;
    let adapters: Vec<String> = s.get(non_empty(a.adapters), "adapters", Vec::new())?;
    let zs_adapters: Vec<String> = s.get(non_empty(a.zero_shot_adapters), "zero_shot_adapters", Vec::new())?;
    let data_budgets: Vec<usize> = s.get(non_empty(a.data_budgets), "data_budgets", vec![50, 100, 200, 500])?;
    let time_budgets: Vec<f64> = s.get(non_empty(a.time_budgets), "time_budgets", Vec::new())?;
    let pred_lengths: Vec<usize> = s.get(non_empty(a.pred_lengths), "pred_lengths", vec![6, 12, 24, 48])?;
    let input_len = s.get(a.input_len, "input_len", 36usize)?;
    let anchors: Vec<usize> = s.get(non_empty(a.anchors), "anchors", Vec::new())?;
    let seed = s.get(a.seed, "seed", 0u64)?;
    let parallel = s.get(a.parallel.then_some(true), "parallel", false)?;
    let out = s.get(a.out, "out", PathBuf::from("results.csv"))?;

    if datasets.is_empty() {
        return Err(usage("at least one --dataset is required"));
    }
    if time_budgets.iter().any(|&b| b.is_nan() || b <= 0.0) {
        return Err(usage("time budgets must be positive"));
    }
    let mut registry: Vec<Box<dyn Forecaster>> = Vec::new();
    if let Some(w) = &weights {
        let params = load_weights(w).with_context(|| format!("loading {}", w.display()))?;
        registry.push(Box::new(ModelForecaster::new("model", Arc::new(params))));
    }
    for b in Baseline::ALL {
        registry.push(Box::new(BaselineForecaster(b)));
    }
    for spec in &adapters {
        registry.push(Box::new(parse_adapter(spec, false)?));
    }
    for spec in &zs_adapters {
        registry.push(Box::new(parse_adapter(spec, true)?));
    }
    let names: Vec<String> = registry.iter().map(|a| a.name().to_string()).collect();
    if let Some(unknown) = selected.iter().find(|n| !names.contains(n)) {
        return Err(usage(format!("unknown algorithm `{unknown}`; registered: {}", names.join(", "))));
    }
    if !selected.is_empty() {
        registry.retain(|a| selected.iter().any(|n| n == a.name()));
    }

    let mut budgets: Vec<Budget> = data_budgets.iter().map(|&x| Budget::data(x)).collect();
    budgets.extend(time_budgets.iter().map(|&t| Budget::time(t)));
    let anchor_policy = if anchors.is_empty() { Anchors::Default } else { Anchors::At(anchors) };
    let out = ctx.prepare_output(out)?;
    let mut total = 0;
    for path in &datasets {
        let ds = load_dataset(path, freq).with_context(|| format!("loading {}", path.display()))?;
        let tasks = build_tasks(&ds, &anchor_policy, &budgets, &pred_lengths, input_len)?;
        log::info!("{}: {} series, {} tasks", ds.name, ds.series.len(), tasks.len());
        let records = run_benchmark(&ds, &tasks, &mut registry, RunnerOptions { seed, parallel })?;
        append_records(&out, &records)?;
        total += records.len();
    }
    println!("appended {total} records to {}", out.display());
    let mut m = ctx.manifest("benchmark");
    m.results.insert("records".into(), (total as i64).into());
    m.artifact(&out);
    m.write(&manifest_path(&out))?;
    Ok(())
}

fn report(ctx: &mut Ctx, a: ReportArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let results = s.get(a.results, "results", PathBuf::from("results.csv"))?;
    let metric_names: Vec<String> = s.get(non_empty(a.metrics), "metrics", vec!["mse".to_string()])?;
    let group_names: Vec<String> =
        s.get(non_empty(a.group_by), "group_by", vec!["dataset".to_string(), "prediction_length".to_string()])?;
    let out = s.get(a.out, "out", PathBuf::from("report"))?;
    let metrics: Vec<Metric> = metric_names.iter().map(|m| parse(m, "metric")).collect::<Result<_>>()?;
    let group_by: Vec<Dimension> = group_names.iter().map(|g| parse(g, "grouping dimension")).collect::<Result<_>>()?;

    let records = load_records(&results).with_context(|| format!("reading {}", results.display()))?;
    if records.is_empty() {
        println!("no records in {}", results.display());
        return Ok(());
    }
    let out = ctx.output(out);
    let files = write_report(&records, &group_by, &metrics, &out)?;
    for &metric in &metrics {
        let agg = synthcast_core::benchmark::aggregate(&records, &group_by, metric);
        println!("{metric}: {} configurations ({} excluded)", agg.configurations(), agg.excluded);
        println!("{:<40} {:<16} {:>6} {:>10}", "group", "algorithm", "wins", "mean_rank");
        for r in agg.rows() {
            println!("{:<40} {:<16} {:>6} {:>10.3}", r.group, r.algorithm, r.wins, r.mean_rank);
        }
    }
    let manifest_file = out.join("report.manifest.toml");
    let mut m = ctx.manifest("report");
    for f in &files {
        m.artifact(f);
    }
    m.write(&manifest_file)?;
    Ok(())
}
