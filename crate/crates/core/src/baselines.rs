//! Last, Mean and SeasonalNaive. All three look only at the input window.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observation;
use crate::timebase::Date;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Last,
    Mean,
    SeasonalNaive,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Last, Baseline::Mean, Baseline::SeasonalNaive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::Last => "last",
            Baseline::Mean => "mean",
            Baseline::SeasonalNaive => "seasonal_naive",
        }
    }

    pub fn forecast(&self, input: &[Observation], horizon: &[Date]) -> Result<BaselineForecast> {
        let predictions = match self {
            Baseline::Last => last_forecast(input, horizon)?,
            Baseline::Mean => mean_forecast(input, horizon)?,
            Baseline::SeasonalNaive => seasonal_naive_forecast(input, horizon)?,
        };
        Ok(BaselineForecast { algorithm: *self, predictions })
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineForecast {
    pub algorithm: Baseline,
    pub predictions: Vec<f64>,
}

fn present(input: &[Observation]) -> impl Iterator<Item = &Observation> {
    input.iter().filter(|o| o.present)
}

pub fn last_forecast(input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
    let last = present(input).last().ok_or(Error::NoPresentValues)?.value;
    Ok(vec![last; horizon.len()])
}

fn mean_of(input: &[Observation]) -> Result<f64> {
    let (sum, n) = present(input).fold((0.0, 0usize), |(s, n), o| (s + o.value, n + 1));
    if n == 0 {
        return Err(Error::NoPresentValues);
    }
    Ok(sum / n as f64)
}

pub fn mean_forecast(input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
    Ok(vec![mean_of(input)?; horizon.len()])
}

/// Mean of the inputs on the same weekday as each horizon date; the input
/// mean when that weekday never occurs.
pub fn seasonal_naive_forecast(input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
    seasonal_naive_with(input, horizon, false)
}

/// As [`seasonal_naive_forecast`], but with `month_buckets` set, buckets by
/// month of year instead when the input sits on a monthly grid (consecutive
/// dates at least 28 days apart).
pub fn seasonal_naive_with(input: &[Observation], horizon: &[Date], month_buckets: bool) -> Result<Vec<f64>> {
    let fallback = mean_of(input)?;
    let mut by_weekday = [(0.0, 0usize); 7];
    let mut by_month = [(0.0, 0usize); 12];
    for o in present(input) {
        let w = &mut by_weekday[o.date.weekday() as usize];
        w.0 += o.value;
        w.1 += 1;
        let m = &mut by_month[o.date.month() as usize - 1];
        m.0 += o.value;
        m.1 += 1;
    }
    let monthly = month_buckets
        && input.len() >= 2
        && input.windows(2).all(|w| w[1].date.to_days() - w[0].date.to_days() >= 28);
    let buckets: &[(f64, usize)] = if monthly { &by_month } else { &by_weekday };
    let key = |d: &Date| if monthly { d.month() as usize - 1 } else { d.weekday() as usize };
    Ok(horizon
        .iter()
        .map(|d| match buckets[key(d)] {
            (_, 0) => fallback,
            (sum, n) => sum / n as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn daily(start: Date, values: &[f64]) -> Vec<Observation> {
        values.iter().enumerate().map(|(i, &v)| Observation::new(start.add_days(i as i64), v)).collect()
    }

    fn days(start: Date, n: usize) -> Vec<Date> {
        (0..n).map(|i| start.add_days(i as i64)).collect()
    }

    #[test]
    fn last_and_mean() {
        let start = Date::new(2020, 1, 1).unwrap();
        let mut input = daily(start, &[1.0, 2.0, 3.0, 9.0, 7.5]);
        let h = days(start.add_days(5), 3);
        assert_eq!(last_forecast(&input, &h).unwrap(), vec![7.5; 3]);
        assert_eq!(last_forecast(&input[..1], &h).unwrap(), vec![1.0; 3]);
        input[4] = Observation::missing(input[4].date);
        assert_eq!(last_forecast(&input, &h).unwrap(), vec![9.0; 3]);
        assert_eq!(mean_forecast(&input[..3], &h).unwrap(), vec![2.0; 3]);
        input[1] = Observation::missing(input[1].date);
        assert_eq!(mean_forecast(&input[..3], &h).unwrap(), vec![2.0; 3]);
        assert!(last_forecast(&[], &h).is_err());
        assert!(mean_forecast(&[Observation::missing(start)], &h).is_err());
    }

    #[test]
    fn monday_mean_of_two_weeks() {
        // 2024-01-01 is a Monday.
        let start = Date::new(2024, 1, 1).unwrap();
        let mut values: Vec<f64> = (0..14).map(|i| 100.0 + i as f64).collect();
        values[0] = 10.0;
        values[7] = 12.0;
        let input = daily(start, &values);
        let monday = start.add_days(14);
        assert_eq!(seasonal_naive_forecast(&input, &[monday]).unwrap(), vec![11.0]);

        // Brute-force bucket oracle over the whole week.
        let h = days(start.add_days(14), 7);
        let got = seasonal_naive_forecast(&input, &h).unwrap();
        for (d, g) in h.iter().zip(got) {
            let same: Vec<f64> = input
                .iter()
                .filter(|o| o.date.to_days().rem_euclid(7) == d.to_days().rem_euclid(7))
                .map(|o| o.value)
                .collect();
            assert_eq!(g, same.iter().sum::<f64>() / same.len() as f64);
        }
    }

    #[test]
    fn short_input_falls_back_to_mean() {
        let start = Date::new(2024, 1, 1).unwrap();
        let input = daily(start, &[1.0, 2.0, 6.0]);
        // Sunday never appears in Mon..Wed.
        let sunday = start.add_days(6);
        assert_eq!(seasonal_naive_forecast(&input, &[sunday]).unwrap(), vec![3.0]);
    }

    #[test]
    fn weekly_period_reproduced() {
        let start = Date::new(2023, 6, 5).unwrap();
        let week = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let values: Vec<f64> = (0..36).map(|i| week[i % 7]).collect();
        let input = daily(start, &values);
        let h = days(start.add_days(36), 14);
        let got = seasonal_naive_forecast(&input, &h).unwrap();
        for (i, g) in got.iter().enumerate() {
            assert_eq!(*g, week[(36 + i) % 7]);
        }
    }

    #[test]
    fn month_buckets_for_monthly_grid() {
        let start = Date::new(2019, 1, 1).unwrap();
        let input: Vec<Observation> =
            (0..36).map(|i| Observation::new(start.add_months(i), (i % 12) as f64)).collect();
        let h: Vec<Date> = (36..40).map(|i| start.add_months(i)).collect();
        assert_eq!(seasonal_naive_with(&input, &h, true).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        // Default stays on weekday buckets.
        assert_eq!(seasonal_naive_with(&input, &h, false).unwrap(), seasonal_naive_forecast(&input, &h).unwrap());
    }

    #[test]
    fn names_round_trip() {
        for b in Baseline::ALL {
            assert_eq!(b.as_str().parse::<Baseline>().unwrap(), b);
        }
        assert!("arima".parse::<Baseline>().is_err());
    }

    proptest! {
        #[test]
        fn shift_equivariance(values in prop::collection::vec(-1e3f64..1e3, 1..50), b in -1e3f64..1e3, skip in 0usize..50) {
            let start = Date::new(2021, 2, 3).unwrap();
            let mut input = daily(start, &values);
            if skip < input.len() && input.len() > 1 {
                input[skip] = Observation::missing(input[skip].date);
            }
            let shifted: Vec<Observation> = input.iter().map(|o| Observation { value: o.value + b, ..*o }).collect();
            let h = days(start.add_days(values.len() as i64), 9);
            for alg in Baseline::ALL {
                let a = alg.forecast(&input, &h).unwrap().predictions;
                let s = alg.forecast(&shifted, &h).unwrap().predictions;
                prop_assert_eq!(a.len(), h.len());
                for (x, y) in a.iter().zip(&s) {
                    prop_assert!((x + b - y).abs() < 1e-9 * (1.0 + y.abs()));
                }
            }
        }
    }
}
