//! Zero-shot time-series forecasting with a small encoder transformer trained
//! only on series drawn from a parametric synthetic prior.

pub mod baselines;
pub mod benchmark;
pub mod error;
pub mod model;
pub mod prior;
pub mod rng;
pub mod scaling;
pub mod timebase;
pub mod training;

pub use error::{Error, Result};
