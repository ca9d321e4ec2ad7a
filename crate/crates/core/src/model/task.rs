use serde::{Deserialize, Serialize};

use crate::timebase::Date;

/// One dated point of a series. Missing points keep their date but are
/// flagged with `present = false`; their value is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: Date,
    pub value: f64,
    pub present: bool,
}

impl Observation {
    pub fn new(date: Date, value: f64) -> Self {
        Self { date, value, present: true }
    }

    pub fn missing(date: Date) -> Self {
        Self { date, value: f64::NAN, present: false }
    }
}

/// A single forecasting problem: a set of dated inputs and one query date.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub input: Vec<Observation>,
    pub query_date: Date,
    pub target_observed: f64,
    /// Underlying (noise-free) value at the query; only known for synthetic data.
    pub target_noiseless: Option<f64>,
}

impl Task {
    pub fn present_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.input.iter().filter(|o| o.present).map(|o| o.value)
    }

    pub fn last_input_date(&self) -> Option<Date> {
        self.input.iter().map(|o| o.date).max()
    }
}
