//! Benchmark result rows and their append-only CSV store.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetKind {
    Data,
    Time,
}

impl fmt::Display for BudgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetKind::Data => "data",
            BudgetKind::Time => "time",
        })
    }
}

impl FromStr for BudgetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data" => Ok(BudgetKind::Data),
            "time" => Ok(BudgetKind::Time),
            _ => Err(Error::InvalidArgument(format!("unknown budget kind `{s}`"))),
        }
    }
}

/// One measurement. Metrics are stored flat so the CSV stays one row per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub series_id: String,
    pub algorithm: String,
    pub budget_kind: BudgetKind,
    pub budget_value: f64,
    pub prediction_length: usize,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mspe: f64,
    pub runtime_seconds: f64,
    pub failed: bool,
}

impl ResultRecord {
    pub fn metrics(&self) -> Metrics {
        Metrics { mse: self.mse, mae: self.mae, mape: self.mape, mspe: self.mspe }
    }

    pub fn set_metrics(&mut self, m: Metrics) {
        self.mse = m.mse;
        self.mae = m.mae;
        self.mape = m.mape;
        self.mspe = m.mspe;
    }
}

/// Appends records, writing the header only when the file is new or empty.
pub fn append_records(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    write_records(file, records, fresh)
}

pub fn write_records<W: Write>(w: W, records: &[ResultRecord], header: bool) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(header).from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<ResultRecord>> {
    csv::Reader::from_reader(r).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Missing or empty files read as no records.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    match std::fs::File::open(path) {
        Ok(f) => read_records(f),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}
