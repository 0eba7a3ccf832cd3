use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fasta: {0}")]
    Fasta(String),
    #[error("record `{id}`: disallowed character `{ch}` at offset {offset}")]
    DisallowedBase { id: String, ch: char, offset: usize },
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid intervals: {0}")]
    Intervals(String),
    #[error("invalid synthetic spec: {0}")]
    SyntheticSpec(String),
    #[error("invalid corpus: {0}")]
    Corpus(String),
    #[error("invalid bit string: {0}")]
    Bits(String),
    #[error("insufficient capacity: need {needed} bits, cover holds {available}")]
    Capacity { needed: usize, available: usize },
    #[error("symbol {0:?} is outside the five-bit alphabet")]
    Alphabet(char),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("cell {coords}: {source}")]
    Cell { coords: String, source: Box<Error> },
    #[error("training: {0}")]
    Training(String),
    #[error("non-finite loss in gradient check")]
    NonFiniteLoss,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
