//! Blinded A/B image-preference survey: serves pairs from a fixed pool,
//! records four-metric votes to an append-only log and exposes aggregate
//! results in the same shape as the offline preference report.

mod http;
mod pool;
mod store;

use promptlab_core::preference::{Metric, PreferenceError};
use thiserror::Error;

pub use http::{router, serve, AppConfig, RATER_COOKIE, RATER_HEADER};
pub use pool::{read_pool, BlindedPair, Reveal, SurveyPair};
pub use store::{ServeStatus, StoreConfig, Submission, SurveyStore};

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("invalid pair pool: {0}")]
    Pool(String),
    #[error("corrupt survey data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("no more pairs for this rater")]
    NoMorePairs,
    #[error("pair {0} was not served to this rater")]
    NotServed(String),
    #[error("pair {0} already voted")]
    AlreadyVoted(String),
    #[error("pair {0} was skipped")]
    Skipped(String),
    #[error("missing choice for metric {0}")]
    MissingMetric(Metric),
    #[error("invalid submission: {0}")]
    InvalidSubmission(String),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}
