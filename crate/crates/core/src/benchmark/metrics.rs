use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on `|y|` in the percentage metrics.
pub const EPS_Y: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mspe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mae,
    Mape,
    Mspe,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mse, Metric::Mae, Metric::Mape, Metric::Mspe];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Mape => "mape",
            Metric::Mspe => "mspe",
        }
    }
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mse => self.mse,
            Metric::Mae => self.mae,
            Metric::Mape => self.mape,
            Metric::Mspe => self.mspe,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}` (expected mse, mae, mape or mspe)")))
    }
}

pub fn compute_metrics(predictions: &[f64], actuals: &[f64]) -> Result<Metrics> {
    if predictions.len() != actuals.len() || predictions.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    let n = predictions.len() as f64;
    let mut m = Metrics::default();
    for (&p, &y) in predictions.iter().zip(actuals) {
        let e = p - y;
        let rel = e / y.abs().max(EPS_Y);
        m.mse += e * e;
        m.mae += e.abs();
        m.mape += rel.abs();
        m.mspe += rel * rel;
    }
    m.mse /= n;
    m.mae /= n;
    m.mape /= n;
    m.mspe /= n;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(compute_metrics(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), Metrics::default());
        let m = compute_metrics(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!((m.mse, m.mae), (1.0, 1.0));
        assert!((m.mape - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        let z = compute_metrics(&[0.5], &[0.0]).unwrap();
        assert!(z.mape.is_finite() && z.mspe.is_finite());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn metric_names() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("rmse".parse::<Metric>().is_err());
    }
}
