// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-channel changepoint statistics and location estimators.
//!
//! Every statistic here is a function of the partial sums `S_0..S_T` only,
//! which is what makes the conditional (given `S_T`) calibration exact. The
//! evaluators are built once per `(kind, T, S_T)` and reused for the observed
//! series and for every Monte Carlo null draw, so observed and null values are
//! computed by literally the same arithmetic.

use crate::error::{Error, Result};
use crate::num::{tie_slack, Real};
use crate::pmf::{binomial_log_pmf, hypergeometric_log_pmf, hypergeometric_support};
use crate::series::{ChannelSeries, SeriesKind};
use serde::{Deserialize, Serialize};

/// Weighted CUSUM parameters: exponent `delta` in `[0, 1]` and optional
/// trimming `aT <= t <= bT`. Without trimming every split `1..T-1` is scanned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CusumConfig<F> {
    pub delta: F,
    pub bounds: Option<(F, F)>,
}

impl<F: Real> CusumConfig<F> {
    pub fn full(delta: F) -> Self {
        Self { delta, bounds: None }
    }

    pub fn trimmed(delta: F, a: F, b: F) -> Self {
        Self {
            delta,
            bounds: Some((a, b)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= F::zero() && self.delta <= F::one()) {
            return Err(Error::config(format!("CUSUM exponent {} outside [0, 1]", self.delta)));
        }
        if let Some((a, b)) = self.bounds {
            if !(a > F::zero() && b < F::one() && a < b) {
                return Err(Error::config(format!(
                    "CUSUM trimming requires 0 < a < b < 1, got a = {a}, b = {b}"
                )));
            }
        }
        Ok(())
    }

    /// Integer scan range `[ceil(aT), floor(bT)] ∩ [1, T-1]`.
    pub fn scan_range(&self, len: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if len < 2 {
            return Err(Error::config(format!("series length {len} < 2")));
        }
        let (mut lo, mut hi) = (1usize, len - 1);
        if let Some((a, b)) = self.bounds {
            let t = F::of_usize(len);
            let eps = F::of(1e-9);
            let a_t = (a * t - eps).ceil().to_usize().unwrap_or(0);
            let b_t = (b * t + eps).floor().to_usize().unwrap_or(0);
            lo = lo.max(a_t);
            hi = hi.min(b_t);
        }
        if lo > hi {
            return Err(Error::config(format!("empty CUSUM scan range for T = {len}")));
        }
        Ok((lo, hi))
    }
}

/// Value of a scan statistic and the split index that attains it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue<F> {
    pub value: F,
    pub argmax_t: usize,
}

/// Precomputed CUSUM weights for one series length.
///
/// Uses `|S_t/t - (S_T - S_t)/(T - t)| = |T S_t - t S_T| / (t (T - t))`, so the
/// data-dependent factor is an exact integer and only the weight is rounded.
#[derive(Clone, Debug)]
pub struct CusumEvaluator<F> {
    len: usize,
    lo: usize,
    coef: Vec<F>,
}

impl<F: Real> CusumEvaluator<F> {
    pub fn new(len: usize, cfg: &CusumConfig<F>) -> Result<Self> {
        let (lo, hi) = cfg.scan_range(len)?;
        let t_len = F::of_usize(len);
        let coef = (lo..=hi)
            .map(|t| {
                let u = F::of_usize(t) / t_len;
                let w = if cfg.delta == F::zero() {
                    F::one()
                } else {
                    (u * (F::one() - u)).powf(cfg.delta)
                };
                w / (F::of_usize(t) * F::of_usize(len - t))
            })
            .collect();
        Ok(Self { len, lo, coef })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Evaluates on partial sums `S_0..S_T`.
    pub fn eval(&self, ps: &[u64]) -> StatisticValue<F> {
        debug_assert_eq!(ps.len(), self.len + 1);
        let total = ps[self.len] as i128;
        let t_len = self.len as i128;
        let at = |t: usize, c: F| {
            let num = (t_len * ps[t] as i128 - t as i128 * total).unsigned_abs();
            c * F::of(num as f64)
        };
        let mut best = StatisticValue {
            value: at(self.lo, self.coef[0]),
            argmax_t: self.lo,
        };
        for (k, &c) in self.coef.iter().enumerate().skip(1) {
            let t = self.lo + k;
            let v = at(t, c);
            if v - best.value > tie_slack(best.value) * F::of(1e-3) {
                best = StatisticValue { value: v, argmax_t: t };
            }
        }
        best
    }
}

/// `max_t [t/T (1 - t/T)]^δ |S_t/t - (S_T - S_t)/(T - t)|` over the scan range.
pub fn cusum_statistic<F: Real>(series: &ChannelSeries, cfg: &CusumConfig<F>) -> Result<StatisticValue<F>> {
    let eval = CusumEvaluator::new(series.len(), cfg)?;
    Ok(eval.eval(&series.partial_sums()))
}

/// Profile-likelihood evaluator for one `(kind, T, S_T)`.
///
/// Binary segments contribute `n H(k/n) = n ln n - k ln k - (n-k) ln(n-k)`;
/// count segments contribute `n G(k/n) = k - k ln k + k ln n`. Both use
/// `0 ln 0 = 0`.
#[derive(Clone, Debug)]
pub struct LrEvaluator<F> {
    kind: SeriesKind,
    len: usize,
    total: u64,
    xlnx: Vec<F>,
    ln: Vec<F>,
    null_fit: F,
}

impl<F: Real> LrEvaluator<F> {
    pub fn new(kind: SeriesKind, len: usize, total: u64) -> Self {
        let top = len.max(total as usize);
        let ln: Vec<F> = (0..=top)
            .map(|n| if n == 0 { F::zero() } else { F::of_usize(n).ln() })
            .collect();
        let xlnx: Vec<F> = ln.iter().enumerate().map(|(n, &l)| F::of_usize(n) * l).collect();
        let mut ev = Self {
            kind,
            len,
            total,
            xlnx,
            ln,
            null_fit: F::zero(),
        };
        ev.null_fit = ev.segment(len, total);
        ev
    }

    #[inline]
    fn segment(&self, n: usize, k: u64) -> F {
        let k = k as usize;
        match self.kind {
            SeriesKind::Binary => self.xlnx[n] - self.xlnx[k] - self.xlnx[n - k],
            SeriesKind::Count => F::of_usize(k) - self.xlnx[k] + F::of_usize(k) * self.ln[n],
        }
    }

    /// Profile objective `t·Φ(S_t/t) + (T-t)·Φ((S_T-S_t)/(T-t))` at split `t`.
    #[inline]
    pub fn objective(&self, ps: &[u64], t: usize) -> F {
        self.segment(t, ps[t]) + self.segment(self.len - t, self.total - ps[t])
    }

    /// `(-2(ℓ0 - ℓ1), smallest minimizer of the profile objective)`.
    pub fn eval(&self, ps: &[u64]) -> StatisticValue<F> {
        debug_assert_eq!(ps.len(), self.len + 1);
        debug_assert_eq!(ps[self.len], self.total);
        let mut best_t = 1;
        let mut best = self.objective(ps, 1);
        for t in 2..self.len {
            let o = self.objective(ps, t);
            if best - o > tie_slack(best) * F::of(1e-1) {
                best = o;
                best_t = t;
            }
        }
        let two = F::of(2.0);
        StatisticValue {
            value: (two * (self.null_fit - best)).max(F::zero()),
            argmax_t: best_t,
        }
    }
}

fn lr_checked<F: Real>(series: &ChannelSeries, expected: SeriesKind) -> Result<StatisticValue<F>> {
    if series.kind() != expected {
        return Err(Error::Kind {
            expected,
            found: series.kind(),
        });
    }
    Ok(lr_statistic(series))
}

/// Likelihood-ratio statistic for a Bernoulli series.
pub fn lr_statistic_binary<F: Real>(series: &ChannelSeries) -> Result<StatisticValue<F>> {
    lr_checked(series, SeriesKind::Binary)
}

/// Likelihood-ratio statistic for a Poisson series.
pub fn lr_statistic_count<F: Real>(series: &ChannelSeries) -> Result<StatisticValue<F>> {
    lr_checked(series, SeriesKind::Count)
}

/// Likelihood-ratio statistic for the series' own kind.
pub fn lr_statistic<F: Real>(series: &ChannelSeries) -> StatisticValue<F> {
    LrEvaluator::new(series.kind(), series.len(), series.total()).eval(&series.partial_sums())
}

/// Log-space slack under which two PMF values count as tied.
const PMF_TIE_LOG: f64 = 1e-9;

/// Two-sided PMF-ordering p-values for every support point of `S_i | S_T`.
#[derive(Clone, Debug)]
pub struct PValueRow<F> {
    lo: u64,
    pvals: Vec<F>,
}

impl<F: Real> PValueRow<F> {
    /// Row for split `i` of a series of length `len` with total `total`.
    pub fn new(kind: SeriesKind, len: usize, total: u64, i: usize) -> Self {
        let (lo, hi, lf): (u64, u64, Vec<F>) = match kind {
            SeriesKind::Binary => {
                let (lo, hi) = hypergeometric_support(i as u64, total, len as u64);
                let lf = (lo..=hi)
                    .map(|q| {
                        hypergeometric_log_pmf::<F>(q as i64, i as u64, total, len as u64)
                            .map(|v| v.0)
                            .unwrap_or(F::neg_infinity())
                    })
                    .collect();
                (lo, hi, lf)
            }
            SeriesKind::Count => {
                let p = F::of_usize(i) / F::of_usize(len);
                let lf = (0..=total)
                    .map(|q| {
                        binomial_log_pmf::<F>(q as i64, total, p)
                            .map(|v| v.0)
                            .unwrap_or(F::neg_infinity())
                    })
                    .collect();
                (0, total, lf)
            }
        };
        debug_assert_eq!(lf.len() as u64, hi - lo + 1);

        let mut order: Vec<usize> = (0..lf.len()).collect();
        order.sort_by(|&a, &b| lf[a].partial_cmp(&lf[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = F::zero();
        for &k in &order {
            acc = acc + lf[k].exp();
            cum.push(acc);
        }
        let tol = F::of(PMF_TIE_LOG);
        let mut pvals = vec![F::one(); lf.len()];
        let mut j = 0;
        for (pos, &k) in order.iter().enumerate() {
            if j < pos {
                j = pos;
            }
            while j + 1 < order.len() && lf[order[j + 1]] <= lf[k] + tol {
                j += 1;
            }
            pvals[k] = cum[j].min(F::one());
        }
        Self { lo, pvals }
    }

    /// p-value of an observed prefix sum; 1 outside the support (unreachable
    /// for consistent inputs).
    #[inline]
    pub fn pvalue(&self, s_i: u64) -> F {
        s_i.checked_sub(self.lo)
            .and_then(|k| self.pvals.get(k as usize).copied())
            .unwrap_or(F::one())
    }
}

/// All `T - 1` p-value rows for one `(kind, T, S_T)`.
#[derive(Clone, Debug)]
pub struct MinPTable<F> {
    kind: SeriesKind,
    len: usize,
    total: u64,
    rows: Vec<PValueRow<F>>,
}

impl<F: Real> MinPTable<F> {
    pub fn new(kind: SeriesKind, len: usize, total: u64) -> Self {
        let rows = (1..len).map(|i| PValueRow::new(kind, len, total, i)).collect();
        Self { kind, len, total, rows }
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `p_i` for `i = 1..T-1`.
    pub fn pvalues(&self, ps: &[u64]) -> Vec<F> {
        (1..self.len).map(|i| self.rows[i - 1].pvalue(ps[i])).collect()
    }

    /// `(min_i p_i, smallest minimizing i)`.
    pub fn eval(&self, ps: &[u64]) -> (F, usize) {
        debug_assert_eq!(ps.len(), self.len + 1);
        let mut best = self.rows[0].pvalue(ps[1]);
        let mut best_i = 1;
        for i in 2..self.len {
            let p = self.rows[i - 1].pvalue(ps[i]);
            if best - p > tie_slack(best) * F::of(1e-3) {
                best = p;
                best_i = i;
            }
        }
        (best, best_i)
    }
}

/// Conditional p-values `p_1..p_{T-1}`: hypergeometric for binary series,
/// binomial with rate `i/T` for count series.
pub fn minp_pvalue_vector<F: Real>(series: &ChannelSeries) -> Vec<F> {
    let ps = series.partial_sums();
    let (len, total) = (series.len(), series.total());
    (1..len)
        .map(|i| PValueRow::<F>::new(series.kind(), len, total, i).pvalue(ps[i]))
        .collect()
}

/// Location estimator derived from one of the test objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator<F> {
    Cusum(CusumConfig<F>),
    Lr,
    MinP,
}

/// Estimated changepoint index in `1..T-1`; ties resolve to the smallest index.
pub fn estimate_changepoint<F: Real>(series: &ChannelSeries, method: &Estimator<F>) -> Result<usize> {
    match method {
        Estimator::Cusum(cfg) => Ok(cusum_statistic(series, cfg)?.argmax_t),
        Estimator::Lr => Ok(lr_statistic::<F>(series).argmax_t),
        Estimator::MinP => {
            let p = minp_pvalue_vector::<F>(series);
            let mut best = p[0];
            let mut best_i = 1;
            for (k, &v) in p.iter().enumerate().skip(1) {
                if best - v > tie_slack(best) * F::of(1e-3) {
                    best = v;
                    best_i = k + 1;
                }
            }
            Ok(best_i)
        }
    }
}
