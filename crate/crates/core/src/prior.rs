//! The synthetic series prior: trend × seasonality × multiplicative Weibull
//! noise, with the underlying signal and the noise kept separate so that
//! training can target the noise-free value.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, Task};
use crate::rng::{derive_rng, domain};
use crate::timebase::{date_add, Date, Frequency};

/// The six hyperparameters of the prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyperparams {
    pub mu_m: f64,
    pub sigma_m: f64,
    pub sigma_lin: f64,
    pub sigma_exp: f64,
    pub m_noise_scale: f64,
    pub weibull_k: f64,
}

impl Default for PriorHyperparams {
    fn default() -> Self {
        Self {
            mu_m: -0.01,
            sigma_m: 0.5,
            sigma_lin: 0.01,
            sigma_exp: 0.005,
            m_noise_scale: 1.0,
            weibull_k: 2.0,
        }
    }
}

impl PriorHyperparams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu_m, self.sigma_m, self.sigma_lin, self.sigma_exp, self.m_noise_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.sigma_m < 0.0 || self.sigma_lin < 0.0 || self.sigma_exp < 0.0 {
            return Err(Error::InvalidArgument(
                "prior scales must be finite and non-negative".into(),
            ));
        }
        if !(self.weibull_k > 0.0 && self.weibull_k.is_finite()) {
            return Err(Error::InvalidArgument("weibull_k must be positive".into()));
        }
        if self.m_noise_scale < 0.0 {
            return Err(Error::InvalidArgument("noise scale must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Week,
    Month,
    Year,
}

/// Period (in grid units) and amplitude range of one seasonal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonSpec {
    pub season: Season,
    pub period: f64,
    pub amplitude: (f64, f64),
}

impl SeasonSpec {
    pub fn new(season: Season, period: f64, lo: f64, hi: f64) -> Self {
        Self { season, period, amplitude: (lo, hi) }
    }

    /// Per-frequency tables. Components without a listed range get amplitude 0.
    pub fn defaults(freq: Frequency) -> Vec<SeasonSpec> {
        match freq {
            Frequency::Daily => vec![
                SeasonSpec::new(Season::Week, 7.0, 0.0, 1.0),
                SeasonSpec::new(Season::Month, 30.5, 0.0, 0.2),
                SeasonSpec::new(Season::Year, 365.25, 0.0, 0.0),
            ],
            Frequency::Weekly => vec![
                SeasonSpec::new(Season::Month, 2.0, 0.0, 0.3),
                SeasonSpec::new(Season::Year, 52.0, 0.0, 0.1),
            ],
            Frequency::Monthly => vec![SeasonSpec::new(Season::Year, 12.0, 0.0, 0.5)],
        }
    }

    pub fn harmonics(&self) -> usize {
        (self.period / 2.0).floor() as usize
    }
}

/// A drawn seasonal component with unit-norm harmonic coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonComponent {
    pub season: Season,
    pub period: f64,
    pub amplitude: f64,
    pub sin_coef: Vec<f64>,
    pub cos_coef: Vec<f64>,
}

impl SeasonComponent {
    pub fn factor(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 1.0;
        }
        let base = 2.0 * PI * t / self.period;
        let sum: f64 = self
            .sin_coef
            .iter()
            .zip(&self.cos_coef)
            .enumerate()
            .map(|(i, (c, d))| {
                let arg = base * (i + 1) as f64;
                c * arg.sin() + d * arg.cos()
            })
            .sum();
        1.0 + self.amplitude * sum
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.sin_coef.iter().chain(&self.cos_coef).map(|c| c * c).sum()
    }
}

/// One hypothesis drawn from the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesParams {
    pub m_lin: f64,
    pub c_lin: f64,
    pub m_exp: f64,
    pub c_exp: f64,
    pub m_noise: f64,
    pub weibull_k: f64,
    pub seasons: Vec<SeasonComponent>,
}

impl SeriesParams {
    pub fn season(&self, season: Season) -> Option<&SeasonComponent> {
        self.seasons.iter().find(|s| s.season == season)
    }

    pub fn underlying_at(&self, t: f64) -> f64 {
        trend_at(self, t) * seasonal_at(self, t)
    }
}

pub fn sample_series_params<R: Rng + ?Sized>(
    hyper: &PriorHyperparams,
    freq: Frequency,
    rng: &mut R,
) -> SeriesParams {
    sample_series_params_with(hyper, &SeasonSpec::defaults(freq), rng)
}

/// Draws trend scalars, then for each season its amplitude and harmonic
/// coefficients `N(0, 1/f)` rescaled to unit sum of squares.
pub fn sample_series_params_with<R: Rng + ?Sized>(
    hyper: &PriorHyperparams,
    specs: &[SeasonSpec],
    rng: &mut R,
) -> SeriesParams {
    let slope = Normal::new(hyper.mu_m, hyper.sigma_m).expect("validated sigma_m");
    let lin_offset = Normal::new(0.0, hyper.sigma_lin).expect("validated sigma_lin");
    let exp_base = Normal::new(1.0, hyper.sigma_exp).expect("validated sigma_exp");

    let m_lin = slope.sample(rng);
    let c_lin = lin_offset.sample(rng);
    let m_exp = slope.sample(rng);
    let c_exp = loop {
        let c = exp_base.sample(rng);
        if c > 0.0 {
            break c;
        }
    };

    let seasons = specs
        .iter()
        .map(|spec| {
            let (lo, hi) = spec.amplitude;
            let amplitude = lo + (hi - lo) * rng.random::<f64>();
            let n = spec.harmonics();
            let mut sin_coef = Vec::with_capacity(n);
            let mut cos_coef = Vec::with_capacity(n);
            for f in 1..=n {
                let dist = Normal::new(0.0, 1.0 / f as f64).expect("positive std");
                sin_coef.push(dist.sample(rng));
                cos_coef.push(dist.sample(rng));
            }
            let norm = sin_coef.iter().chain(&cos_coef).map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 {
                sin_coef.iter_mut().chain(cos_coef.iter_mut()).for_each(|c| *c /= norm);
            }
            SeasonComponent { season: spec.season, period: spec.period, amplitude, sin_coef, cos_coef }
        })
        .collect();

    SeriesParams {
        m_lin,
        c_lin,
        m_exp,
        c_exp,
        m_noise: hyper.m_noise_scale,
        weibull_k: hyper.weibull_k,
        seasons,
    }
}

/// `(1 + m_lin·t + c_lin) · m_exp · c_exp^t`
pub fn trend_at(params: &SeriesParams, t: f64) -> f64 {
    (1.0 + params.m_lin * t + params.c_lin) * (params.m_exp * params.c_exp.powf(t))
}

pub fn seasonal_at(params: &SeriesParams, t: f64) -> f64 {
    params.seasons.iter().map(|s| s.factor(t)).product()
}

/// Inverse-CDF draw of Weibull(scale 1, shape k) from `u ∈ (0, 1]`.
pub fn weibull_from_uniform(u: f64, k: f64) -> f64 {
    (-u.ln()).powf(1.0 / k)
}

/// `1 + m_noise·(z − median)`, median-centred so that a median draw is neutral.
pub fn noise_factor(z: f64, m_noise: f64, k: f64) -> f64 {
    1.0 + m_noise * (z - LN_2.powf(1.0 / k))
}

pub fn noise_draw<R: Rng + ?Sized>(params: &SeriesParams, rng: &mut R) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    noise_factor(weibull_from_uniform(u, params.weibull_k), params.m_noise, params.weibull_k)
}

/// A rendered synthetic series.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub start_date: Date,
    pub freq: Frequency,
    pub params: SeriesParams,
    pub dates: Vec<Date>,
    pub underlying: Vec<f64>,
    pub noise: Vec<f64>,
    pub observed: Vec<f64>,
}

impl SyntheticSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

pub fn generate_series<R: Rng + ?Sized>(
    hyper: &PriorHyperparams,
    freq: Frequency,
    start: Date,
    length: usize,
    rng: &mut R,
) -> Result<SyntheticSeries> {
    generate_series_with(hyper, &SeasonSpec::defaults(freq), freq, start, length, rng)
}

pub fn generate_series_with<R: Rng + ?Sized>(
    hyper: &PriorHyperparams,
    specs: &[SeasonSpec],
    freq: Frequency,
    start: Date,
    length: usize,
    rng: &mut R,
) -> Result<SyntheticSeries> {
    hyper.validate()?;
    if length == 0 {
        return Err(Error::InvalidArgument("series length must be at least 1".into()));
    }
    let params = sample_series_params_with(hyper, specs, rng);
    let mut dates = Vec::with_capacity(length);
    let mut underlying = Vec::with_capacity(length);
    let mut noise = Vec::with_capacity(length);
    let mut observed = Vec::with_capacity(length);
    for i in 0..length {
        let psi = params.underlying_at(i as f64);
        let z = noise_draw(&params, rng);
        dates.push(date_add(start, i as u32, freq));
        underlying.push(psi);
        noise.push(z);
        observed.push(psi * z);
    }
    Ok(SyntheticSeries { start_date: start, freq, params, dates, underlying, noise, observed })
}

/// Uniform start date in 1980-01-01 ..= 2029-12-31.
pub fn random_start_date<R: Rng + ?Sized>(rng: &mut R) -> Date {
    let lo = Date::new(1980, 1, 1).expect("valid").to_days();
    let hi = Date::new(2029, 12, 31).expect("valid").to_days();
    Date::from_days(rng.random_range(lo..=hi))
}

/// Generates `count` series whose RNG streams are keyed by
/// `(seed, first_index + i)`, so any subset can be regenerated independently.
pub fn generate_corpus(
    hyper: &PriorHyperparams,
    freq: Frequency,
    count: usize,
    length: usize,
    seed: u64,
    first_index: u64,
) -> Result<Vec<SyntheticSeries>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(seed, domain::SERIES, first_index + i);
            let start = random_start_date(&mut rng);
            generate_series(hyper, freq, start, length, &mut rng)
        })
        .collect()
}

/// Builds the task whose input window starts at `start` and whose query lies
/// `horizon` steps past the window end. Targets beyond the rendered series are
/// evaluated from the series parameters with a fresh noise draw from `rng`.
pub fn task_at<R: Rng + ?Sized>(
    series: &SyntheticSeries,
    start: usize,
    window: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Task> {
    if window == 0 || start + window > series.len() {
        return Err(Error::SeriesTooShort { len: series.len(), window: start + window });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("query horizon must be at least 1".into()));
    }
    let end = start + window - 1;
    let input = (start..=end)
        .map(|i| Observation::new(series.dates[i], series.observed[i]))
        .collect();
    let q = end + horizon;
    let (target_observed, target_noiseless) = if q < series.len() {
        (series.observed[q], series.underlying[q])
    } else {
        let psi = series.params.underlying_at(q as f64);
        (psi * noise_draw(&series.params, rng), psi)
    };
    Ok(Task {
        input,
        query_date: date_add(series.dates[end], horizon as u32, series.freq),
        target_observed,
        target_noiseless: Some(target_noiseless),
    })
}

/// One task per window position (stride 1), each with a uniformly drawn
/// query offset in `1..=max_horizon`.
pub fn make_tasks<R: Rng + ?Sized>(
    series: &SyntheticSeries,
    window: usize,
    max_horizon: usize,
    rng: &mut R,
) -> Result<Vec<Task>> {
    if series.len() < window || window == 0 {
        return Err(Error::SeriesTooShort { len: series.len(), window });
    }
    if max_horizon == 0 {
        return Err(Error::InvalidArgument("max_horizon must be at least 1".into()));
    }
    (0..=series.len() - window)
        .map(|start| {
            let h = rng.random_range(1..=max_horizon);
            task_at(series, start, window, h, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn flat_params() -> SeriesParams {
        SeriesParams {
            m_lin: 0.0,
            c_lin: 0.0,
            m_exp: 1.0,
            c_exp: 1.0,
            m_noise: 0.0,
            weibull_k: 2.0,
            seasons: vec![],
        }
    }

    fn start() -> Date {
        Date::new(2020, 1, 1).unwrap()
    }

    #[test]
    fn zero_variance_trend_is_deterministic() {
        let hyper = PriorHyperparams { sigma_m: 0.0, sigma_lin: 0.0, sigma_exp: 0.0, ..Default::default() };
        let p = sample_series_params(&hyper, Frequency::Daily, &mut rng(3));
        assert_eq!(p.m_lin, hyper.mu_m);
        assert_eq!(p.m_exp, hyper.mu_m);
        assert_eq!(p.c_lin, 0.0);
        assert_eq!(p.c_exp, 1.0);
    }

    #[test]
    fn coefficients_have_unit_norm() {
        let mut r = rng(11);
        for freq in Frequency::ALL {
            for _ in 0..50 {
                let p = sample_series_params(&PriorHyperparams::default(), freq, &mut r);
                for s in &p.seasons {
                    assert!((s.sum_of_squares() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn daily_amplitudes_follow_table() {
        let mut r = rng(5);
        for _ in 0..200 {
            let p = sample_series_params(&PriorHyperparams::default(), Frequency::Daily, &mut r);
            let week = p.season(Season::Week).unwrap().amplitude;
            let month = p.season(Season::Month).unwrap().amplitude;
            let year = p.season(Season::Year).unwrap().amplitude;
            assert!((0.0..=1.0).contains(&week));
            assert!((0.0..=0.2).contains(&month));
            assert_eq!(year, 0.0);
            assert_eq!(p.m_noise, 1.0);
        }
    }

    #[test]
    fn harmonic_counts() {
        let counts = |freq| -> Vec<usize> {
            SeasonSpec::defaults(freq).iter().map(|s| s.harmonics()).collect()
        };
        assert_eq!(counts(Frequency::Daily), vec![3, 15, 182]);
        assert_eq!(counts(Frequency::Weekly), vec![1, 26]);
        assert_eq!(counts(Frequency::Monthly), vec![6]);
        let p = sample_series_params(&PriorHyperparams::default(), Frequency::Daily, &mut rng(0));
        assert_eq!(p.season(Season::Year).unwrap().sin_coef.len(), 182);
    }

    #[test]
    fn trend_examples() {
        let mut p = flat_params();
        for t in [0.0, 1.0, 17.5, 300.0] {
            assert_eq!(trend_at(&p, t), 1.0);
        }
        p.m_lin = 0.1;
        assert!((trend_at(&p, 10.0) - 2.0).abs() < 1e-12);
        p.m_lin = 0.0;
        p.m_exp = 2.0;
        p.c_exp = 1.01;
        assert!((trend_at(&p, 2.0) - 2.0402).abs() < 1e-12);
    }

    #[test]
    fn seasonal_examples() {
        let mut p = flat_params();
        assert_eq!(seasonal_at(&p, 3.3), 1.0);
        p.seasons.push(SeasonComponent {
            season: Season::Week,
            period: 7.0,
            amplitude: 1.0,
            sin_coef: vec![0.0, 0.0, 0.0],
            cos_coef: vec![1.0, 0.0, 0.0],
        });
        assert!((seasonal_at(&p, 0.0) - 2.0).abs() < 1e-15);
        let q = sample_series_params(&PriorHyperparams::default(), Frequency::Daily, &mut rng(9));
        let week = q.season(Season::Week).unwrap();
        for t in [0.3, 5.0, 123.456] {
            assert!((week.factor(t + 7.0) - week.factor(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_examples() {
        let mut p = flat_params();
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(noise_draw(&p, &mut r), 1.0);
        }
        p.m_noise = 0.7;
        assert_eq!(noise_factor(LN_2, 0.7, 1.0), 1.0);
        // u = 1/2 is the median of the uniform, so it maps to the Weibull median.
        assert!((weibull_from_uniform(0.5, 1.0) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn weibull_median_k1() {
        let mut r = rng(2024);
        let mut z: Vec<f64> = (0..1_000_000)
            .map(|_| weibull_from_uniform(1.0 - r.random::<f64>(), 1.0))
            .collect();
        let mid = z.len() / 2;
        let (_, median, _) = z.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        assert!((*median - LN_2).abs() < 0.01, "median {median}");
    }

    #[test]
    fn generate_series_contracts() {
        let hyper = PriorHyperparams::default();
        let a = generate_series(&hyper, Frequency::Daily, start(), 200, &mut rng(42)).unwrap();
        let b = generate_series(&hyper, Frequency::Daily, start(), 200, &mut rng(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.underlying.len(), 200);
        assert_eq!(a.noise.len(), 200);
        assert_eq!(a.observed.len(), 200);
        for i in 0..200 {
            assert_eq!(a.observed[i], a.underlying[i] * a.noise[i]);
        }
        assert_eq!(a.dates[199], date_add(start(), 199, Frequency::Daily));

        let quiet = PriorHyperparams { m_noise_scale: 0.0, ..hyper };
        let s = generate_series(&quiet, Frequency::Monthly, start(), 50, &mut rng(1)).unwrap();
        assert_eq!(s.observed, s.underlying);
        assert!(generate_series(&hyper, Frequency::Daily, start(), 0, &mut rng(1)).is_err());
    }

    #[test]
    fn make_tasks_counts() {
        let hyper = PriorHyperparams::default();
        let s = generate_series(&hyper, Frequency::Weekly, start(), 200, &mut rng(8)).unwrap();
        let tasks = make_tasks(&s, 100, 10, &mut rng(9)).unwrap();
        assert_eq!(tasks.len(), 101);
        for (i, t) in tasks.iter().enumerate() {
            assert_eq!(t.input.len(), 100);
            assert_eq!(t.input[0].date, s.dates[i]);
            let end = s.dates[i + 99];
            let weeks = (t.query_date.to_days() - end.to_days()) / 7;
            assert!((1..=10).contains(&weeks));
            assert!(t.query_date > end);
            assert!(t.target_noiseless.is_some());
        }

        let short = generate_series(&hyper, Frequency::Daily, start(), 100, &mut rng(8)).unwrap();
        assert_eq!(make_tasks(&short, 100, 10, &mut rng(0)).unwrap().len(), 1);
        let shorter = generate_series(&hyper, Frequency::Daily, start(), 50, &mut rng(8)).unwrap();
        assert!(matches!(make_tasks(&shorter, 100, 10, &mut rng(0)), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn targets_inside_series_use_stored_values() {
        let s = generate_series(&PriorHyperparams::default(), Frequency::Daily, start(), 60, &mut rng(3))
            .unwrap();
        let t = task_at(&s, 0, 30, 5, &mut rng(0)).unwrap();
        assert_eq!(t.target_observed, s.observed[34]);
        assert_eq!(t.target_noiseless, Some(s.underlying[34]));
        let beyond = task_at(&s, 30, 30, 4, &mut rng(0)).unwrap();
        assert_eq!(beyond.target_noiseless, Some(s.params.underlying_at(63.0)));
    }

    #[test]
    fn corpus_is_order_independent() {
        let hyper = PriorHyperparams::default();
        let all = generate_corpus(&hyper, Frequency::Daily, 6, 40, 77, 0).unwrap();
        let tail = generate_corpus(&hyper, Frequency::Daily, 3, 40, 77, 3).unwrap();
        assert_eq!(&all[3..], &tail[..]);
    }

    #[test]
    fn invalid_hyperparams() {
        let bad = PriorHyperparams { weibull_k: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PriorHyperparams { sigma_m: -1.0, ..Default::default() };
        assert!(generate_series(&bad, Frequency::Daily, start(), 5, &mut rng(0)).is_err());
    }
}
