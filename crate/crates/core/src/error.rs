use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("{field} out of range at step {step}: {value}")]
    OutOfRange {
        field: &'static str,
        step: usize,
        value: f64,
    },

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("episode is not in final-outcome encoding: {0}")]
    NotFinalOutcome(String),

    #[error("episode has no interim targets")]
    MissingInterimTargets,

    #[error("line {line}: field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("io: {0}")]
    Io(String),

    #[error("invalid Markov reward process: {0}")]
    InvalidProcess(String),

    #[error("no terminal state reached within {0} steps")]
    NoTermination(usize),

    #[error("stream exhausted before the target multiplier fell below {cutoff:e} (last multiplier {remaining:e})")]
    StreamExhausted { cutoff: f64, remaining: f64 },

    #[error("chain is {0}")]
    Chain(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid schedule `{0}`")]
    Schedule(String),

    #[error("shrink precondition: {0}")]
    NotFailing(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
