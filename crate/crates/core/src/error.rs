use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the three per-BS feasibility rules a replacement must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// The inserted file must be requested at the BS in the current slot.
    Admissibility,
    /// The inserted file must not already be cached at the BS.
    Duplication,
    /// The evicted file must be the one stored in the named slot of a full cache.
    Consistency,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Admissibility => "admissibility",
            Rule::Duplication => "duplication",
            Rule::Consistency => "consistency",
        })
    }
}

/// A single BS action failed a feasibility rule.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("BS {}: {rule} violated: {detail}", .bs + 1)]
pub struct FeasibilityError {
    /// Zero-based BS index.
    pub bs: usize,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),

    #[error("cannot execute an Invalid joint action")]
    InvalidAction,

    #[error("illegal transition: {0}")]
    Transition(String),

    #[error("look-ahead window too short: need {needed} slots, have {available}")]
    ShortLookahead { needed: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error at record {index}: {message}")]
    Schema { index: usize, message: String },

    #[error("malformed prompt: {0}")]
    Prompt(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
