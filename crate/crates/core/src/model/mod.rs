//! The encoder-only transformer that maps a set of dated, scaled values plus
//! one query date to a point prediction.

mod io;
mod net;
mod params;
mod task;

pub use io::{load_weights, read_weights, save_weights, write_weights, FORMAT_VERSION};
pub use net::{backward, embed, forward, forward_batch, forward_cached, tokenize, ForwardCache, TokenInputs};
pub use params::{EncoderBlock, LayerNorm, Linear, ModelConfig, ModelParams, TensorRef};
pub use task::{Observation, Task};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scaling::{self, ScalerState};
use crate::timebase::Date;

/// Fits the model's scaler on the task's present inputs.
pub fn fit_input_scaler(params: &ModelParams, input: &[Observation]) -> Result<ScalerState> {
    let values: Vec<f64> = input.iter().map(|o| o.value).collect();
    let mask: Vec<bool> = input.iter().map(|o| o.present).collect();
    scaling::fit(params.config.scaler, &values, &mask)
}

/// Token matrix of a task (`T × d`, query last).
pub fn embed_tokens(params: &ModelParams, task: &Task, scaler: &ScalerState) -> Result<Array2<f64>> {
    let tokens = tokenize(&task.input, task.query_date, scaler)?;
    embed(params, &tokens)
}

/// Zero-shot forecasts in original units, one query per horizon date.
/// Inputs longer than `max_input_len` are truncated to the most recent points.
pub fn predict(params: &ModelParams, input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::NoPresentValues);
    }
    let keep = params.config.max_input_len;
    let input = &input[input.len().saturating_sub(keep)..];
    let scaler = fit_input_scaler(params, input)?;
    let last = input.iter().filter(|o| o.present).map(|o| o.date).max().ok_or(Error::NoPresentValues)?;
    let tokens = horizon
        .iter()
        .map(|&date| {
            if date <= last {
                return Err(Error::InvalidArgument(format!(
                    "horizon date {date} is not after the last input date {last}"
                )));
            }
            tokenize(input, date, &scaler)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(forward_batch(params, &tokens)?.into_iter().map(|y| scaler.inverse(y)).collect())
}
