use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("length error in {path}: expected {expected} bytes, found {found}")]
    Length {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("requested {requested} components but effective rank is {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("non-finite loss at omega = {omega:?}")]
    Loss { omega: Vec<f64> },

    #[error("non-finite loss at the initial omega {omega:?}; try a smaller scale")]
    Initialization { omega: Vec<f64> },

    #[error("absorbing state at x = {state}: degree is zero")]
    AbsorbingState { state: f64 },

    #[error("integration produced a non-finite state at t = {time}")]
    Integration { time: f64 },

    #[error("simulation blew up at step {step} of trajectory {trajectory}")]
    BlowUp { trajectory: usize, step: usize },

    #[error("estimate is not a density: {negative_fraction:.3} of the mass is negative")]
    NotADensity { negative_fraction: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
