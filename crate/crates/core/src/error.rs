// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::series::SeriesKind;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or sampler parameter lies outside its domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// A configuration (scan range, Monte Carlo size, scenario) is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series kind mismatch: expected {expected}, found {found}")]
    Kind { expected: SeriesKind, found: SeriesKind },

    #[error("invalid series: {0}")]
    Series(String),

    /// Input file parse failure; `row` and `column` are 1-based.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(row: usize, column: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            row,
            column,
            message: msg.into(),
        }
    }
}
