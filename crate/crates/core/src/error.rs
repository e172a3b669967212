use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("duplicate minute key (subject `{subject}`, day {day}, minute {minute})")]
    DuplicateMinute {
        subject: String,
        day: u32,
        minute: u16,
    },

    #[error("detector name `{0}` collides with an existing step series")]
    NameCollision(String),

    #[error("epoch streams are misaligned: {0}")]
    Misaligned(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("no events in data")]
    NoEvents,

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("Cox fit did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        fit: Box<crate::survival::CoxFit>,
    },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
