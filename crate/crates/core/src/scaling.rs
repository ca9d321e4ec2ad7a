//! Per-window value normalization.
//!
//! Robust scaling screens 2σ outliers before standardizing and clips the
//! result to ±3 in scaled units. Min-max scaling exists for ablations.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor for the fitted spread.
pub const MIN_SPREAD: f64 = 1e-6;
pub const CLIP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    #[default]
    Robust,
    MinMax,
}

impl ScalerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalerKind::Robust => "robust",
            ScalerKind::MinMax => "minmax",
        }
    }
}

impl std::fmt::Display for ScalerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "robust" => Ok(ScalerKind::Robust),
            "minmax" | "min-max" => Ok(ScalerKind::MinMax),
            other => Err(Error::InvalidArgument(format!("unknown scaler `{other}`"))),
        }
    }
}

/// Fitted scaling statistics. Immutable once fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: ScalerKind,
    pub center: f64,
    pub spread: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

fn present<'a>(values: &'a [f64], mask: &'a [bool]) -> Result<Vec<f64>> {
    if values.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} values but {} mask entries",
            values.len(),
            mask.len()
        )));
    }
    let out: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if out.is_empty() {
        return Err(Error::NoPresentValues);
    }
    Ok(out)
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn fit(kind: ScalerKind, values: &[f64], mask: &[bool]) -> Result<ScalerState> {
    match kind {
        ScalerKind::Robust => fit_robust(values, mask),
        ScalerKind::MinMax => fit_minmax(values, mask),
    }
}

/// Single screening pass: population moments of the present values, then
/// moments of the points within 2σ of the mean.
pub fn fit_robust(values: &[f64], mask: &[bool]) -> Result<ScalerState> {
    let xs = present(values, mask)?;
    let (mu0, sigma0) = moments(&xs);
    let inliers: Vec<f64> = xs.iter().copied().filter(|y| (y - mu0).abs() <= 2.0 * sigma0).collect();
    // The mean is always within 2σ of itself only in exact arithmetic; keep the
    // unscreened moments if rounding empties the set.
    let (center, spread) = if inliers.is_empty() { (mu0, sigma0) } else { moments(&inliers) };
    Ok(ScalerState {
        kind: ScalerKind::Robust,
        center,
        spread: spread.max(MIN_SPREAD),
        clip_lo: -CLIP,
        clip_hi: CLIP,
    })
}

pub fn fit_minmax(values: &[f64], mask: &[bool]) -> Result<ScalerState> {
    let xs = present(values, mask)?;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalerState {
        kind: ScalerKind::MinMax,
        center: lo,
        spread: (hi - lo).max(MIN_SPREAD),
        clip_lo: f64::NEG_INFINITY,
        clip_hi: f64::INFINITY,
    })
}

impl ScalerState {
    pub fn transform(&self, y: f64) -> f64 {
        ((y - self.center) / self.spread).clamp(self.clip_lo, self.clip_hi)
    }

    /// Transform without clipping; used to express predictions in scaled units.
    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.center) / self.spread
    }

    pub fn inverse(&self, scaled: f64) -> f64 {
        scaled * self.spread + self.center
    }

    /// Transforms every entry; entries flagged missing are passed through
    /// untouched so the mask keeps its meaning.
    pub fn transform_masked(&self, values: &[f64], mask: &[bool]) -> Vec<f64> {
        values
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { self.transform(v) } else { v })
            .collect()
    }
}
