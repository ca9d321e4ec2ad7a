//! Proleptic-Gregorian calendar arithmetic and the calendar features used to
//! tokenize timestamps.
//!
//! Dates are converted to a day count relative to 1970-01-01 with the
//! era-based civil algorithm, which is exact for the whole `i32` year range we
//! accept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A valid proleptic-Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    year: i32,
    month: u32,
    day: u32,
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl Date {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(Error::InvalidDate { year, month, day });
        }
        Ok(Self { year, month, day })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    /// Days since 1970-01-01 (negative before the epoch).
    pub fn to_days(&self) -> i64 {
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = i64::from(self.month);
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn from_days(days: i64) -> Self {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
        let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
        Self { year, month, day }
    }

    pub fn add_days(&self, n: i64) -> Self {
        Self::from_days(self.to_days() + n)
    }

    /// Advances whole calendar months, clamping the day to the target month's
    /// last day.
    pub fn add_months(&self, n: i64) -> Self {
        let total = i64::from(self.year) * 12 + i64::from(self.month - 1) + n;
        let year = total.div_euclid(12) as i32;
        let month = total.rem_euclid(12) as u32 + 1;
        let day = self.day.min(days_in_month(year, month));
        Self { year, month, day }
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(&self) -> u32 {
        // 1970-01-01 was a Thursday.
        (self.to_days() + 3).rem_euclid(7) as u32
    }

    /// 1-based ordinal day within the year.
    pub fn ordinal(&self) -> u32 {
        let jan1 = Date { year: self.year, month: 1, day: 1 };
        (self.to_days() - jan1.to_days()) as u32 + 1
    }

    pub fn features(&self) -> TimeFeatures {
        TimeFeatures {
            year: self.year,
            month: self.month,
            day: self.day,
            day_of_week: self.weekday(),
            day_of_year: self.ordinal(),
        }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for Date {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::DateParse(s.to_string());
        let s = s.trim();
        // Allow a leading minus sign on the year.
        let (sign, rest) = match s.strip_prefix('-') {
            Some(r) => (-1, r),
            None => (1, s),
        };
        let mut parts = rest.splitn(3, '-');
        let year: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let day: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Date::new(sign * year, month, day)
    }
}

impl Serialize for Date {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Calendar features of a single date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeFeatures {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    /// 0 = Monday.
    pub day_of_week: u32,
    pub day_of_year: u32,
}

pub const N_TIME_FEATURES: usize = 5;

impl TimeFeatures {
    /// `[(year - reference_year)/10, month/12, day/31, dow/7, doy/366]`.
    pub fn normalized(&self, reference_year: i32) -> [f64; N_TIME_FEATURES] {
        [
            f64::from(self.year - reference_year) / 10.0,
            f64::from(self.month) / 12.0,
            f64::from(self.day) / 31.0,
            f64::from(self.day_of_week) / 7.0,
            f64::from(self.day_of_year) / 366.0,
        ]
    }
}

pub fn features_of(date: Date) -> TimeFeatures {
    date.features()
}

pub fn normalize_features(tf: &TimeFeatures, reference_year: i32) -> [f64; N_TIME_FEATURES] {
    tf.normalized(reference_year)
}

/// Sampling grid of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

impl Frequency {
    pub const ALL: [Frequency; 3] = [Frequency::Daily, Frequency::Weekly, Frequency::Monthly];

    /// Length of one time unit in days.
    pub fn unit_days(&self) -> f64 {
        match self {
            Frequency::Daily => 1.0,
            Frequency::Weekly => 7.0,
            Frequency::Monthly => 30.5,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        }
    }

    /// Guesses the grid from the gap between two consecutive dates.
    pub fn infer(a: Date, b: Date) -> Option<Frequency> {
        match (b.to_days() - a.to_days()).abs() {
            1 => Some(Frequency::Daily),
            7 => Some(Frequency::Weekly),
            28..=31 => Some(Frequency::Monthly),
            _ => None,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "d" => Ok(Frequency::Daily),
            "weekly" | "w" => Ok(Frequency::Weekly),
            "monthly" | "m" => Ok(Frequency::Monthly),
            other => Err(Error::InvalidArgument(format!("unknown frequency `{other}`"))),
        }
    }
}

/// Advances `date` by `n` steps of `freq`.
pub fn date_add(date: Date, n: u32, freq: Frequency) -> Date {
    match freq {
        Frequency::Daily => date.add_days(i64::from(n)),
        Frequency::Weekly => date.add_days(7 * i64::from(n)),
        Frequency::Monthly => date.add_months(i64::from(n)),
    }
}
