// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Observation model of a channel: Bernoulli (binary) or Poisson (count).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Binary,
    Count,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Binary => "binary",
            SeriesKind::Count => "count",
        }
    }

    /// True when every arrangement with this total is the same series, so the
    /// conditional null law is a point mass.
    pub fn is_degenerate(self, len: usize, total: u64) -> bool {
        match self {
            SeriesKind::Binary => total == 0 || total == len as u64,
            SeriesKind::Count => total == 0,
        }
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "bernoulli" => Ok(SeriesKind::Binary),
            "count" | "poisson" => Ok(SeriesKind::Count),
            other => Err(Error::config(format!("unknown series kind `{other}`"))),
        }
    }
}

/// One time-indexed sequence of binary or count observations.
///
/// Invariants: length >= 2; binary kind holds only 0 and 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSeries {
    kind: SeriesKind,
    values: Vec<u64>,
}

impl ChannelSeries {
    pub fn new(kind: SeriesKind, values: Vec<u64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Series(format!(
                "series needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if kind == SeriesKind::Binary {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(Error::Series(format!("binary series holds {v} at position {}", i + 1)));
            }
        }
        Ok(Self { kind, values })
    }

    pub fn binary(values: &[u64]) -> Result<Self> {
        Self::new(SeriesKind::Binary, values.to_vec())
    }

    pub fn count(values: &[u64]) -> Result<Self> {
        Self::new(SeriesKind::Count, values.to_vec())
    }

    pub(crate) fn from_parts_unchecked(kind: SeriesKind, values: Vec<u64>) -> Self {
        debug_assert!(values.len() >= 2);
        Self { kind, values }
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    /// `S_0 = 0, S_1, ..., S_T`.
    pub fn partial_sums(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        fill_partial_sums(&self.values, &mut out);
        out
    }

    pub fn is_degenerate(&self) -> bool {
        self.kind.is_degenerate(self.len(), self.total())
    }

    pub fn into_values(self) -> Vec<u64> {
        self.values
    }
}

pub(crate) fn fill_partial_sums(values: &[u64], out: &mut Vec<u64>) {
    out.clear();
    out.push(0);
    let mut acc = 0u64;
    for &v in values {
        acc += v;
        out.push(acc);
    }
}
