use thiserror::Error;

/// Errors produced across the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },

    #[error("cannot parse date `{0}`")]
    DateParse(String),

    #[error("input has no present values")]
    NoPresentValues,

    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("task has no noiseless target but noise removal is enabled")]
    MissingNoiselessTarget,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("adapter `{name}`: {message}")]
    Adapter { name: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
