use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("irreversibility violated at hour {hour}: vaginal action requested after cesarean")]
    Irreversible { hour: u32 },

    #[error("state at hour {hour} is not at risk (born or outcome already occurred)")]
    NotAtRisk { hour: u32 },

    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("regime has a natural-course segment but no usual-care policy was supplied")]
    MissingUsualCare,

    #[error("static sequence of length {len} exhausted at relative hour {rel_hour}")]
    SequenceExhausted { len: usize, rel_hour: u32 },

    #[error("invalid estimand: {0}")]
    InvalidEstimand(String),

    #[error("condition state is unreachable under the coarse model: {0}")]
    Unreachable(String),

    #[error("dataset line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("dataset invariant violated for person {person_id} at hour {hour}: {message}")]
    DatasetInvariant {
        person_id: u64,
        hour: u32,
        message: String,
    },

    #[error("empty risk set: {0}")]
    EmptyRiskSet(String),

    #[error("sequential positivity failure at hour {hour}: {message}")]
    Positivity { hour: u32, message: String },

    #[error("no transitions observed at hour {hour}")]
    MissingHour { hour: u32 },

    #[error("component `{component}` has no data for cell {cell}")]
    EmptyCell { component: String, cell: String },

    #[error("logistic fit for `{component}` did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        component: String,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("logistic fit for `{component}` diverged (coefficient norm {norm:.1}); data look separable")]
    Separation { component: String, norm: f64 },

    #[error("logistic fit for `{component}` is degenerate: {message}")]
    Degenerate { component: String, message: String },

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the command-line front end for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidEstimand(_)
            | Error::InvalidRegime(_)
            | Error::WrongMode { .. }
            | Error::MissingUsualCare => ErrorKind::Usage,
            Error::NonConvergence { .. } | Error::Separation { .. } | Error::Degenerate { .. } => {
                ErrorKind::NonConvergence
            }
            Error::UnknownSession(_) => ErrorKind::NotFound,
            Error::Conflict(_) | Error::NotAtRisk { .. } | Error::Irreversible { .. } => {
                ErrorKind::Conflict
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    NonConvergence,
    NotFound,
    Conflict,
}
