use thiserror::Error;

use crate::scm::SimplexWeights;
use crate::screening::ScreeningDecision;

pub type Result<T> = std::result::Result<T, Error>;

/// Error categories map one-to-one onto CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("numerical error: solver did not converge after {iterations} iterations (objective {objective:e})")]
    NotConverged { best: Box<SimplexWeights>, objective: f64, iterations: usize },

    #[error("data error: all controls screened out")]
    AllScreenedOut { decisions: Vec<ScreeningDecision> },

    #[error("data error: {context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("io error: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) => ErrorKind::Usage,
            Error::Data(_) | Error::AllScreenedOut { .. } | Error::Csv { .. } | Error::Io { .. } => ErrorKind::Data,
            Error::Numerical(_) | Error::NotConverged { .. } => ErrorKind::Numerical,
            Error::Internal(_) => ErrorKind::Internal,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
