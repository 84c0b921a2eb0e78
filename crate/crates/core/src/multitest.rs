// SPDX-License-Identifier: MIT OR Apache-2.0

//! False discovery rate procedures: Benjamini-Hochberg, adaptive BH with the
//! Hochberg-Benjamini slope estimate of the null count, and Storey-Taylor-
//! Siegmund.

use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_STS_LAMBDA: f64 = 0.5;

/// Per-channel p-values with their channel labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueSet<F> {
    p: Vec<F>,
    channel_ids: Vec<String>,
}

impl<F: Real> PValueSet<F> {
    pub fn new(p: Vec<F>, channel_ids: Vec<String>) -> Result<Self> {
        if p.len() != channel_ids.len() {
            return Err(Error::config(format!(
                "{} p-values for {} channels",
                p.len(),
                channel_ids.len()
            )));
        }
        if let Some((j, v)) = p.iter().enumerate().find(|(_, &v)| !(v > F::zero() && v <= F::one())) {
            return Err(Error::domain(format!(
                "p-value {v} of channel {} outside (0, 1]",
                j + 1
            )));
        }
        Ok(Self { p, channel_ids })
    }

    /// Labels the channels `1..m`.
    pub fn unlabeled(p: Vec<F>) -> Result<Self> {
        let ids = (1..=p.len()).map(|j| j.to_string()).collect();
        Self::new(p, ids)
    }

    pub fn pvalues(&self) -> &[F] {
        &self.p
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum FdrMethod {
    Bh,
    Abh,
    Sts { lambda: f64 },
}

impl FdrMethod {
    pub fn sts() -> Self {
        FdrMethod::Sts {
            lambda: DEFAULT_STS_LAMBDA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FdrMethod::Bh => "BH",
            FdrMethod::Abh => "ABH",
            FdrMethod::Sts { .. } => "STS",
        }
    }

    pub fn apply<F: Real>(&self, pvals: &PValueSet<F>, alpha: F) -> Result<RejectionSet<F>> {
        match *self {
            FdrMethod::Bh => Ok(bh(pvals, alpha)),
            FdrMethod::Abh => Ok(abh(pvals, alpha)),
            FdrMethod::Sts { lambda } => sts(pvals, alpha, F::of(lambda)),
        }
    }
}

impl fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FdrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bh" => Ok(FdrMethod::Bh),
            "abh" => Ok(FdrMethod::Abh),
            "sts" => Ok(FdrMethod::sts()),
            other => Err(Error::config(format!("unknown FDR procedure `{other}`"))),
        }
    }
}

/// Indices (0-based, ascending) of rejected hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet<F> {
    pub rejected: Vec<usize>,
    pub method: FdrMethod,
    pub alpha: F,
    /// Estimated number of true nulls, for the adaptive procedures.
    pub m0_estimate: Option<F>,
}

impl<F> RejectionSet<F> {
    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.rejected.binary_search(&j).is_ok()
    }
}

fn sorted_order<F: Real>(p: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("p-values are never NaN"));
    idx
}

/// Step-up with thresholds `i * level / denom`: rejects every p-value at or
/// below the largest order statistic under its threshold, and none above `cap`.
pub(crate) fn step_up<F: Real>(p: &[F], level: F, denom: F, cap: F) -> Vec<usize> {
    let order = sorted_order(p);
    let mut cut = None;
    for (rank, &j) in order.iter().enumerate() {
        if p[j] <= F::of_usize(rank + 1) * level / denom {
            cut = Some(p[j]);
        }
    }
    match cut {
        None => Vec::new(),
        Some(c) => {
            let c = c.min(cap);
            (0..p.len()).filter(|&j| p[j] <= c).collect()
        }
    }
}

pub(crate) fn bh_slice<F: Real>(p: &[F], alpha: F) -> Vec<usize> {
    step_up(p, alpha, F::of_usize(p.len()), F::infinity())
}

/// Hochberg-Benjamini lowest-slope estimate of the number of true nulls.
pub(crate) fn slope_m0<F: Real>(p: &[F]) -> F {
    let m = p.len();
    let order = sorted_order(p);
    let slope = |i: usize| (F::one() - p[order[i - 1]]) / F::of_usize(m + 1 - i);
    for i in 2..=m {
        let s = slope(i);
        if s < slope(i - 1) {
            let raw = if s > F::zero() {
                (s.recip()).ceil() + F::one()
            } else {
                F::of_usize(m)
            };
            return raw.max(F::one()).min(F::of_usize(m));
        }
    }
    F::of_usize(m)
}

pub(crate) fn abh_slice<F: Real>(p: &[F], alpha: F) -> (Vec<usize>, F) {
    if p.is_empty() {
        return (Vec::new(), F::zero());
    }
    let m0 = slope_m0(p);
    let m = F::of_usize(p.len());
    (step_up(p, alpha * m / m0, m, F::infinity()), m0)
}

pub(crate) fn sts_slice<F: Real>(p: &[F], alpha: F, lambda: F) -> (Vec<usize>, F) {
    let above = p.iter().filter(|&&v| v > lambda).count();
    let m0 = F::of_usize(above + 1) / (F::one() - lambda);
    (step_up(p, alpha, m0, lambda), m0)
}

pub fn bh<F: Real>(pvals: &PValueSet<F>, alpha: F) -> RejectionSet<F> {
    RejectionSet {
        rejected: bh_slice(&pvals.p, alpha),
        method: FdrMethod::Bh,
        alpha,
        m0_estimate: None,
    }
}

/// BH at level `alpha * m / m0_hat`.
pub fn abh<F: Real>(pvals: &PValueSet<F>, alpha: F) -> RejectionSet<F> {
    let (rejected, m0) = abh_slice(&pvals.p, alpha);
    RejectionSet {
        rejected,
        method: FdrMethod::Abh,
        alpha,
        m0_estimate: Some(m0),
    }
}

/// Step-up with thresholds `i * alpha / m0_hat`, where
/// `m0_hat = (#{p > lambda} + 1) / (1 - lambda)`; p-values above `lambda`
/// are never rejected.
pub fn sts<F: Real>(pvals: &PValueSet<F>, alpha: F, lambda: F) -> Result<RejectionSet<F>> {
    if !(lambda > F::zero() && lambda < F::one()) {
        return Err(Error::config(format!("STS lambda {lambda} outside (0, 1)")));
    }
    let (rejected, m0) = sts_slice(&pvals.p, alpha, lambda);
    Ok(RejectionSet {
        rejected,
        method: FdrMethod::Sts {
            lambda: lambda.as_f64(),
        },
        alpha,
        m0_estimate: Some(m0),
    })
}
