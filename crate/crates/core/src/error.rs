use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("sine basis violated: endpoint values must be exactly zero (got {0})")]
    NonZeroEndpoint(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("damping law: {0}")]
    Damping(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("time stepping misaligned: {0}")]
    Misaligned(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("threshold bracket invalid: {0}")]
    Bracket(String),

    #[error("convergence study aborted: {0}")]
    Convergence(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }
}
