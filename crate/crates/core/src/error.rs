use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("empty loss: every position is ignored")]
    EmptyLoss,

    #[error("empty input")]
    EmptyInput,

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("sequence of length {len} exceeds the {max} available positions")]
    SequenceTooLong { len: usize, max: usize },

    #[error("batch mixes attributes; every member must share one attribute")]
    MixedAttributes,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient polarity: {toxic} sentences above and {civil} below the thresholds")]
    InsufficientPolarity { toxic: usize, civil: usize },

    #[error("non-finite loss at step {step} (dae={dae}, cc={cc})")]
    NonFinite { step: u64, dae: f32, cc: f32 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
