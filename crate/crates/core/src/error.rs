use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: n = {0}, need n >= 8")]
    GridTooCoarse(usize),
    #[error("point id {id} out of range for a grid of {len} points")]
    InvalidPoint { id: usize, len: usize },
    #[error("negative flow time {0}: only forward time is supported")]
    NegativeTime(f64),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input set: {0}")]
    EmptySet(&'static str),
    #[error("budgeted reach set is empty")]
    EmptyReach,
    #[error("sampled flow cannot be evaluated: {0}")]
    Unsampled(String),
    #[error("missing {file:?}; run `{prerequisite}` first")]
    MissingCache { file: PathBuf, prerequisite: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
