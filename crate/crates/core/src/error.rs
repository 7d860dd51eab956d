use thiserror::Error;

use crate::numkit::NumError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("integration produced a non-finite state at step {step}")]
    Divergence { step: usize },
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("non-finite value in feature `{feature}` at row {row}")]
    NonFiniteFeature { feature: String, row: usize },
    #[error("filter diverged at step {step}: {reason}")]
    FilterDivergence { step: usize, reason: String },
    #[error("all particle weights vanished at step {step}")]
    Degenerate { step: usize },
    #[error("training produced a non-finite loss at iteration {iter}")]
    TrainingDivergence { iter: usize, history: Vec<f64> },
    #[error("SDOF kernel needs an underdamped system, got zeta = {zeta}")]
    Overdamped { zeta: f64 },
    #[error("inconsistent configuration: {0}")]
    Mode(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
