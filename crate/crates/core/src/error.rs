use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid CMP parameters (lambda = {lambda}, nu = {nu}): {reason}")]
    InvalidParams {
        lambda: f64,
        nu: f64,
        reason: &'static str,
    },

    #[error(
        "normalizer series did not converge within {terms} terms at (lambda = {lambda}, nu = {nu})"
    )]
    TruncationNotConverged { terms: usize, lambda: f64, nu: f64 },

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(&'static str),

    #[error("conjugate hyperparameters must be finite and positive (a = {a}, b = {b}, c = {c})")]
    InvalidHyper { a: f64, b: f64, c: f64 },

    #[error("Jeffreys information determinant is not positive ({det:e}) at (lambda = {lambda}, nu = {nu})")]
    NonPositiveDeterminant { lambda: f64, nu: f64, det: f64 },

    #[error("unknown prior '{0}' (expected one of conj-1, conj-data, conj-0.1, conj-0.01, flat, jeffreys)")]
    UnknownPrior(String),

    #[error("dataset is empty")]
    EmptyData,

    #[error("improper posterior: {0}")]
    ImproperPosterior(String),

    #[error("chain {chain}: every post-warmup proposal had a non-finite log posterior")]
    AllDivergent { chain: usize },

    #[error("chain {chain}: no finite starting point found after {attempts} attempts")]
    InitializationFailed { chain: usize, attempts: usize },

    #[error("zero within-chain variance; R-hat is undefined")]
    ZeroVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
