//! Error type shared across the pipeline, tagged by the stage that failed.

use thiserror::Error;

/// Pipeline stage a failure originated from. The CLI maps these to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    Ingest,
    Alignment,
    Smoothing,
    Scale,
    Evaluation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    InvalidInput { path: String, msg: String },

    #[error("ingest: {0}")]
    Ingest(String),

    #[error("resampling grid not covered by IMU data: uncovered interval [{from:.6}, {to:.6}] s")]
    GridNotCovered { from: f64, to: f64 },

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("smoothing: {0}")]
    Smoothing(String),

    #[error("scale estimation: {0}")]
    Scale(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stage classification used for CLI exit codes.
    pub fn stage(&self) -> Stage {
        match self {
            Error::Malformed { .. }
            | Error::InvalidInput { .. }
            | Error::Ingest(_)
            | Error::GridNotCovered { .. }
            | Error::Io(_)
            | Error::Simulation(_) => Stage::Ingest,
            Error::Alignment(_) => Stage::Alignment,
            Error::Smoothing(_) => Stage::Smoothing,
            Error::Scale(_) => Stage::Scale,
            Error::Evaluation(_) => Stage::Evaluation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
