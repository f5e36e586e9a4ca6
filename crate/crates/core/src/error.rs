use thiserror::Error;

use crate::score::Beat;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid phrase: {0}")]
    Validation(String),

    #[error("overlapping events in voice {voice} at onset {onset}")]
    Overlap { voice: usize, onset: Beat },

    #[error("unsupported spelling: {0}")]
    UnsupportedSpelling(String),

    #[error("rests carry no pitch")]
    RestHasNoPitch,

    #[error("event has no degree or pitch assigned")]
    Unassigned,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("phrase has no events")]
    EmptyPhrase,

    #[error("step {t} outside 0..={steps}")]
    StepOutOfRange { t: usize, steps: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),

    #[error("no support for node {node} at step {t}")]
    NoSupport { node: usize, t: usize },

    #[error("voice {voice} cannot realize {degree} at onset {onset} inside its range")]
    OutOfRange { voice: String, degree: String, onset: Beat },

    #[error("fusion infeasible at slot {slot}")]
    FusionInfeasible { slot: usize },

    #[error("score is not realized: run fusion or realization before rendering")]
    NotRealized,

    #[error("malformed MIDI: {0}")]
    Midi(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse { line: e.line(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
