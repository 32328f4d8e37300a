//! Monte Carlo experiment driver, data ingestion, and scenario configuration.
//!
//! A [`Scenario`] describes one simulation design: a data-generating DAR model, an
//! innovation law, a sample size, a replicate count, the estimators to compare,
//! and a seed. [`run_monte_carlo`] executes it in a work pool where replicate `r`
//! derives every random stream from `base_seed + r`, so results are bit-identical
//! across thread counts and between the parallel and serial drivers.

mod config;
mod data;
mod mc;

pub use config::{parse_scenario, KPolicy, McEstimator, Scenario, SelectionRule};
pub use data::{load_returns, parse_returns, ReturnKind, ReturnsConfig};
pub use mc::{run_monte_carlo, run_monte_carlo_serial, McReport};

use thiserror::Error;

use crate::dar::DarError;
use crate::estimate::EstimateError;
use crate::innovations::InnovationError;
use crate::select::SelectError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("non-positive price {value} on data row {row}")]
    NonPositivePrice { row: usize, value: f64 },
    #[error("dates not strictly increasing at data row {row}")]
    NonMonotoneDates { row: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Dar(#[from] DarError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Innovation(#[from] InnovationError),
    #[error(transparent)]
    Select(#[from] SelectError),
}
