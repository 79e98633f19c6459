use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch in `{field}`: expected {expected}, got {got}")]
    Arity {
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("timestep {t} out of range 1..={len}")]
    TimestepOutOfRange { t: usize, len: usize },

    #[error("quantization level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown action channel {0}")]
    UnknownChannel(u32),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("action `{0}` is not available in the current state")]
    Unavailable(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: loss {loss} exceeds 10x initial {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error("unsupported {kind} document version {found} (expected {expected})")]
    Version {
        kind: String,
        found: u32,
        expected: u32,
    },

    #[error("parse error at line {line} (byte offset {offset}): {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
