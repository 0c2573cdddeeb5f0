use std::io;

use thiserror::Error;

use crate::tile::DecodeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid risk parameters: {0}")]
    InvalidParams(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("ROC requires at least one positive and one negative label")]
    DegenerateLabels,

    #[error("observations are inconsistent with every reachable parameter value: {0}")]
    InconsistentObservations(String),

    #[error("tile decode failed: {0}")]
    Decode(#[from] DecodeError),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
