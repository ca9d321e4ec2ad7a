use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::Rng;
use synthcast_core::model::{predict, ModelConfig, ModelParams, Observation};
use synthcast_core::prior::{generate_series, random_start_date, task_at, PriorHyperparams};
use synthcast_core::rng::{derive_rng, domain};
use synthcast_core::scaling::ScalerKind;
use synthcast_core::timebase::{date_add, Frequency};
use synthcast_core::training::{prepare_task, PreparedTask, Trainer};

fn input_window(len: usize) -> Vec<Observation> {
    let hyper = PriorHyperparams::default();
    let mut rng = derive_rng(7, domain::SERIES, 0);
    let start = random_start_date(&mut rng);
    let s = generate_series(&hyper, Frequency::Daily, start, len, &mut rng).unwrap();
    s.dates.iter().zip(&s.observed).map(|(&d, &v)| Observation::new(d, v)).collect()
}

fn bench_predict(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    for d in [16, 32] {
        let params = ModelParams::init(&ModelConfig::with_d_model(d), 0).unwrap();
        let input = input_window(36);
        let last = input.last().unwrap().date;
        let horizon: Vec<_> = (1..=48).map(|h| date_add(last, h, Frequency::Daily)).collect();
        group.bench_with_input(BenchmarkId::new("h48_w36", d), &d, |b, _| {
            b.iter(|| predict(&params, &input, &horizon).unwrap())
        });
    }
    group.finish();
}

fn training_batch(n: usize, window: usize) -> Vec<PreparedTask> {
    let hyper = PriorHyperparams::default();
    (0..n as u64)
        .map(|i| {
            let mut rng = derive_rng(3, domain::SERIES, i);
            let start = random_start_date(&mut rng);
            let s = generate_series(&hyper, Frequency::Weekly, start, window + 10, &mut rng).unwrap();
            let h = rng.random_range(1..=10);
            let task = task_at(&s, 0, window, h, &mut rng).unwrap();
            prepare_task(&task, ScalerKind::Robust, true).unwrap()
        })
        .collect()
}

fn bench_train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    let batch = training_batch(128, 36);
    for d in [8, 16] {
        let params = ModelParams::init(&ModelConfig::with_d_model(d), 0).unwrap();
        group.bench_with_input(BenchmarkId::new("b128_w36", d), &d, |b, _| {
            b.iter_batched(
                || Trainer::new(params.clone(), 1e-4).unwrap(),
                |mut t| t.step(&batch).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn bench_prior(c: &mut Criterion) {
    let hyper = PriorHyperparams::default();
    c.bench_function("generate_series/daily_200", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            let mut rng = derive_rng(11, domain::SERIES, i);
            let start = random_start_date(&mut rng);
            generate_series(&hyper, Frequency::Daily, start, 200, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, bench_predict, bench_train_step, bench_prior);
criterion_main!(benches);
