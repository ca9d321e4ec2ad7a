//! Delimited-text dataset ingestion.
//!
//! The first column holds timestamps, every further column is one series.
//! Rows falling on the same calendar day are summed; empty, `NA` or `NaN`
//! cells are treated as missing. Dates absent from the grid are inserted as
//! missing points.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observation;
use crate::timebase::{date_add, Date, Frequency};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub freq: Frequency,
    pub observations: Vec<Observation>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub series: Vec<Series>,
}

/// Accepts `YYYY-MM-DD`, optionally followed by `T` or a space and a
/// `HH:MM[:SS[.fff]]` time with an optional `Z` or `±HH:MM` suffix.
pub fn parse_timestamp(raw: &str) -> Result<Date> {
    let raw = raw.trim();
    let bad = || Error::Dataset(format!("unparseable timestamp `{raw}`"));
    let (date, time) = match raw.find(['T', ' ']) {
        Some(i) => (&raw[..i], Some(raw[i + 1..].trim())),
        None => (raw, None),
    };
    let date: Date = date.parse().map_err(|_| bad())?;
    if let Some(time) = time {
        let time = time.trim_end_matches('Z');
        let time = match time.rfind(['+', '-']) {
            Some(i) => &time[..i],
            None => time,
        };
        let parts: Vec<&str> = time.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let h: u32 = parts[0].parse().map_err(|_| bad())?;
        let m: u32 = parts[1].parse().map_err(|_| bad())?;
        let s: f64 = parts.get(2).map_or(Ok(0.0), |s| s.parse()).map_err(|_| bad())?;
        if h > 23 || m > 59 || !(0.0..61.0).contains(&s) {
            return Err(bad());
        }
    }
    Ok(date)
}

fn parse_cell(cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Dataset(format!("unparseable value `{cell}`")))?;
    Ok(v.is_finite().then_some(v))
}

pub fn load_dataset(path: impl AsRef<Path>, frequency_hint: Option<Frequency>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    read_dataset(std::fs::File::open(path)?, &name, frequency_hint)
}

pub fn read_dataset<R: Read>(reader: R, name: &str, frequency_hint: Option<Frequency>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Dataset("need a timestamp column and at least one value column".into()));
    }
    let n_cols = headers.len() - 1;
    // Per day and column: running sum, or None while every cell was missing.
    let mut days: BTreeMap<Date, Vec<Option<f64>>> = BTreeMap::new();
    let mut previous: Option<Date> = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let date = parse_timestamp(&record[0])?;
        if previous.is_some_and(|p| date < p) {
            return Err(Error::Dataset(format!("dates are not monotonic at row {}: {date}", row + 2)));
        }
        previous = Some(date);
        let slot = days.entry(date).or_insert_with(|| vec![None; n_cols]);
        for (c, cell) in record.iter().skip(1).enumerate() {
            if let Some(v) = parse_cell(cell)? {
                slot[c] = Some(slot[c].unwrap_or(0.0) + v);
            }
        }
    }
    let dates: Vec<Date> = days.keys().copied().collect();
    if dates.is_empty() {
        return Err(Error::Dataset("no rows".into()));
    }
    let freq = frequency_hint.unwrap_or_else(|| infer_frequency(&dates));
    let grid = regular_grid(&dates, freq)?;

    let series = (0..n_cols)
        .map(|c| Series {
            id: headers[c + 1].to_string(),
            freq,
            observations: grid
                .iter()
                .map(|d| match days.get(d).and_then(|row| row[c]) {
                    Some(v) => Observation::new(*d, v),
                    None => Observation::missing(*d),
                })
                .collect(),
        })
        .collect();
    Ok(Dataset { name: name.to_string(), series })
}

/// Weekly when every gap is a multiple of 7 days, monthly when the smallest
/// gap spans at least 28 days otherwise, daily in all other cases.
fn infer_frequency(dates: &[Date]) -> Frequency {
    let gaps: Vec<i64> = dates.windows(2).map(|w| w[1].to_days() - w[0].to_days()).collect();
    let Some(&min) = gaps.iter().min() else {
        return Frequency::Daily;
    };
    if gaps.iter().all(|g| g % 7 == 0) {
        Frequency::Weekly
    } else if min >= 28 {
        Frequency::Monthly
    } else {
        Frequency::Daily
    }
}

/// Grid from the first to the last date; every observed date must lie on it.
fn regular_grid(dates: &[Date], freq: Frequency) -> Result<Vec<Date>> {
    let first = dates[0];
    let last = *dates.last().expect("non-empty");
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let d = date_add(first, k, freq);
        if d > last {
            break;
        }
        grid.push(d);
        k += 1;
    }
    let mut gi = 0;
    for d in dates {
        while gi < grid.len() && grid[gi] < *d {
            gi += 1;
        }
        if gi == grid.len() || grid[gi] != *d {
            return Err(Error::Dataset(format!("date {d} is not on the {freq} grid starting {first}")));
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset> {
        read_dataset(text.as_bytes(), "t", None)
    }

    #[test]
    fn hourly_rows_sum_to_days() {
        let mut text = String::from("time,v\n");
        for day in 1..=2 {
            for h in 0..24 {
                text.push_str(&format!("2021-03-0{day} {h:02}:00:00,1\n"));
            }
        }
        let ds = load(&text).unwrap();
        let values: Vec<f64> = ds.series[0].observations.iter().map(|o| o.value).collect();
        assert_eq!(values, vec![24.0, 24.0]);
        assert_eq!(ds.series[0].freq, Frequency::Daily);
    }

    #[test]
    fn columns_become_series() {
        let ds = load("date,a,b,c\n2020-01-01,1,2,3\n2020-01-02,4,5,6\n").unwrap();
        assert_eq!(ds.series.len(), 3);
        assert_eq!(ds.series[2].id, "c");
        assert_eq!(ds.series[1].observations[1].value, 5.0);
    }

    #[test]
    fn duplicate_days_sum() {
        let ds = load("date,a\n2020-01-01,1\n2020-01-01,2.5\n2020-01-02,1\n").unwrap();
        assert_eq!(ds.series[0].observations[0].value, 3.5);
        assert_eq!(ds.series[0].len(), 2);
    }

    #[test]
    fn gaps_and_missing_cells_are_masked() {
        let ds = load("date,a,b\n2020-01-01,1,\n2020-01-04,2,NA\n").unwrap();
        let a = &ds.series[0].observations;
        assert_eq!(a.len(), 4);
        assert!(a[0].present && !a[1].present && !a[2].present && a[3].present);
        assert!(ds.series[1].observations.iter().all(|o| !o.present));
        let ds = load("date,a\n2020-01-31,1\n2020-02-29,2\n2020-04-30,3\n").unwrap();
        assert_eq!(ds.series[0].freq, Frequency::Monthly);
        assert_eq!(ds.series[0].len(), 4);
    }

    #[test]
    fn weekly_and_monthly_grids() {
        let ds = load("date,a\n2020-01-06,1\n2020-01-13,2\n2020-01-27,3\n").unwrap();
        assert_eq!(ds.series[0].freq, Frequency::Weekly);
        assert_eq!(ds.series[0].len(), 4);
        let ds = read_dataset("date,a\n2020-01-31,1\n2020-03-31,2\n".as_bytes(), "m", Some(Frequency::Monthly)).unwrap();
        assert_eq!(ds.series[0].len(), 3);
        assert_eq!(ds.series[0].observations[1].date, Date::new(2020, 2, 29).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(load("date,a\n2020-01-02,1\n2020-01-01,1\n").is_err());
        assert!(load("date,a\nyesterday,1\n").is_err());
        assert!(load("date,a\n2020-01-01 25:00,1\n").is_err());
        assert!(load("date,a\n2020-01-01,abc\n").is_err());
        assert!(load("date\n2020-01-01\n").is_err());
    }

    #[test]
    fn timestamp_forms() {
        let d = Date::new(2022, 7, 9).unwrap();
        for s in ["2022-07-09", "2022-07-09T13:05", "2022-07-09 13:05:59.5", "2022-07-09T00:00:00Z", "2022-07-09T01:00:00+02:00"] {
            assert_eq!(parse_timestamp(s).unwrap(), d, "{s}");
        }
    }
}
