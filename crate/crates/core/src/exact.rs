// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact conditional tests calibrated by Monte Carlo.
//!
//! Given `S_T`, every statistic in [`crate::statistics`] has a null law that
//! does not depend on the unknown rate, so it can be simulated by drawing
//! series uniformly from the conditional law (see [`crate::pmf`]). Draws are
//! split into fixed-size chunks, each with a generator derived from
//! `(seed, chunk index)`, and the pooled sample is sorted; calibrations are
//! therefore bit-identical whatever the thread count.

use crate::error::{Error, Result};
use crate::num::{tie_slack, Real};
use crate::persist;
use crate::pmf::fill_given_total;
use crate::seed::{derive, hash_label, rng_from};
use crate::series::{fill_partial_sums, ChannelSeries, SeriesKind};
use crate::statistics::{CusumConfig, CusumEvaluator, LrEvaluator, MinPTable};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

/// Monte Carlo size used when the caller does not choose one.
pub const DEFAULT_MC_COUNT: usize = 50_000;
/// Smallest accepted Monte Carlo size.
pub const MIN_MC_COUNT: usize = 1000;

const CHUNK: usize = 1024;

/// Which single-channel statistic a calibration belongs to.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticId {
    /// Weighted CUSUM over the full scan range.
    Cusum {
        delta: f64,
    },
    Lr,
    /// Minimum of the conditional p-value vector.
    MinP,
}

impl StatisticId {
    pub fn label(&self) -> String {
        match self {
            StatisticId::Cusum { delta } => format!("cusum({delta})"),
            StatisticId::Lr => "lr".into(),
            StatisticId::MinP => "minp_min".into(),
        }
    }

    fn key(&self) -> (u8, u64) {
        match self {
            StatisticId::Cusum { delta } => (0, delta.to_bits()),
            StatisticId::Lr => (1, 0),
            StatisticId::MinP => (2, 0),
        }
    }

    fn file_tag(&self) -> String {
        match self {
            StatisticId::Cusum { delta } => format!("cusum{delta}"),
            StatisticId::Lr => "lr".into(),
            StatisticId::MinP => "minp".into(),
        }
    }
}

impl PartialEq for StatisticId {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for StatisticId {}

impl Hash for StatisticId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for StatisticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for StatisticId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "lr" => return Ok(StatisticId::Lr),
            "minp" | "minp_min" => return Ok(StatisticId::MinP),
            _ => {}
        }
        let delta = t
            .strip_prefix("cusum(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|d| d.parse::<f64>().ok())
            .ok_or_else(|| Error::config(format!("unknown statistic `{s}`")))?;
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::config(format!("CUSUM exponent {delta} outside [0, 1]")));
        }
        Ok(StatisticId::Cusum { delta })
    }
}

/// Evaluator of one statistic for a fixed `(kind, T, S_T)`, shared by the
/// observed series and all null draws.
#[derive(Debug)]
pub(crate) enum Evaluator<F> {
    Cusum(CusumEvaluator<F>),
    Lr(LrEvaluator<F>),
    MinP(MinPTable<F>),
}

impl<F: Real> Evaluator<F> {
    pub(crate) fn new(stat: StatisticId, kind: SeriesKind, len: usize, total: u64) -> Result<Self> {
        Ok(match stat {
            StatisticId::Cusum { delta } => {
                Evaluator::Cusum(CusumEvaluator::new(len, &CusumConfig::full(F::of(delta)))?)
            }
            StatisticId::Lr => Evaluator::Lr(LrEvaluator::new(kind, len, total)),
            StatisticId::MinP => Evaluator::MinP(MinPTable::new(kind, len, total)),
        })
    }

    /// `(value, optimizing index)`; for minP the value is `p_(1)`.
    pub(crate) fn eval(&self, ps: &[u64]) -> (F, usize) {
        match self {
            Evaluator::Cusum(e) => {
                let v = e.eval(ps);
                (v.value, v.argmax_t)
            }
            Evaluator::Lr(e) => {
                let v = e.eval(ps);
                (v.value, v.argmax_t)
            }
            Evaluator::MinP(e) => e.eval(ps),
        }
    }
}

/// Sorted Monte Carlo sample of a statistic's conditional null law.
#[derive(Clone, Debug, PartialEq)]
pub struct NullCalibration<F> {
    statistic: StatisticId,
    kind: SeriesKind,
    len: usize,
    total: u64,
    samples: Vec<F>,
    seed: u64,
}

impl<F: Real> NullCalibration<F> {
    pub fn statistic(&self) -> StatisticId {
        self.statistic
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

    pub fn samples(&self) -> &[F] {
        &self.samples
    }

    pub fn mc_count(&self) -> usize {
        self.samples.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(1 + #{draws >= observed}) / (mc + 1)`.
    pub fn upper_pvalue(&self, observed: F) -> F {
        let cut = observed - tie_slack(observed);
        let below = self.samples.partition_point(|&s| s < cut);
        F::of_usize(1 + self.samples.len() - below) / F::of_usize(self.samples.len() + 1)
    }

    /// `(1 + #{draws <= observed}) / (mc + 1)`.
    pub fn lower_pvalue(&self, observed: F) -> F {
        let cut = observed + tie_slack(observed);
        let at_most = self.samples.partition_point(|&s| s <= cut);
        F::of_usize(1 + at_most) / F::of_usize(self.samples.len() + 1)
    }

    /// Order statistic of rank `floor(alpha * mc)` (1-based; rank 0 is the
    /// minimum).
    pub fn lower_quantile(&self, alpha: F) -> F {
        let rank = (alpha * F::of_usize(self.samples.len()))
            .floor()
            .to_usize()
            .unwrap_or(0);
        self.samples[rank.clamp(1, self.samples.len()) - 1]
    }

    /// Empirical CDF at `x`.
    pub fn cdf(&self, x: F) -> F {
        F::of_usize(self.samples.partition_point(|&s| s <= x)) / F::of_usize(self.samples.len())
    }
}

/// Where a test's reference distribution came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CalibrationRef {
    Exact {
        statistic: String,
        kind: SeriesKind,
        len: usize,
        total: u64,
        mc_count: usize,
        seed: u64,
    },
    Asymptotic {
        delta: f64,
        a: f64,
        b: f64,
        grid_size: usize,
        mc_count: usize,
        seed: u64,
    },
    /// The conditional law is a point mass; no sampling was needed.
    Degenerate,
}

impl CalibrationRef {
    fn of<F: Real>(cal: &NullCalibration<F>) -> Self {
        CalibrationRef::Exact {
            statistic: cal.statistic.label(),
            kind: cal.kind,
            len: cal.len,
            total: cal.total,
            mc_count: cal.mc_count(),
            seed: cal.seed,
        }
    }
}

/// Decision of a single-channel test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome<F> {
    pub statistic: F,
    pub p_value: F,
    pub reject: bool,
    pub alpha: F,
    pub changepoint_estimate: usize,
    pub calibration: CalibrationRef,
}

impl<F: Real> TestOutcome<F> {
    pub(crate) fn degenerate(statistic: F, alpha: F) -> Self {
        Self {
            statistic,
            p_value: F::one(),
            reject: false,
            alpha,
            changepoint_estimate: 1,
            calibration: CalibrationRef::Degenerate,
        }
    }
}

pub(crate) fn check_alpha<F: Real>(alpha: F) -> Result<()> {
    if alpha > F::zero() && alpha < F::one() {
        Ok(())
    } else {
        Err(Error::config(format!("significance level {alpha} outside (0, 1)")))
    }
}

fn check_mc(mc_count: usize) -> Result<()> {
    if mc_count < MIN_MC_COUNT {
        return Err(Error::config(format!(
            "Monte Carlo size {mc_count} below the minimum {MIN_MC_COUNT}"
        )));
    }
    Ok(())
}

fn check_shape(kind: SeriesKind, len: usize, total: u64) -> Result<()> {
    if len < 2 {
        return Err(Error::config(format!("series length {len} < 2")));
    }
    if kind == SeriesKind::Binary && total > len as u64 {
        return Err(Error::config(format!("binary total {total} exceeds length {len}")));
    }
    Ok(())
}

/// Seed of the calibration used for a test run with `seed`. Depends only on
/// the calibration key, so channels sharing `(T, S_T)` share one calibration.
pub fn calibration_seed(seed: u64, stat: StatisticId, kind: SeriesKind, len: usize, total: u64) -> u64 {
    let kind_word = match kind {
        SeriesKind::Binary => 0,
        SeriesKind::Count => 1,
    };
    derive(seed, &[hash_label(&stat.label()), kind_word, len as u64, total])
}

fn draw<F: Real>(ev: &Evaluator<F>, kind: SeriesKind, len: usize, total: u64, mc: usize, seed: u64) -> Vec<F> {
    let chunks = mc.div_ceil(CHUNK);
    let parts: Vec<Vec<F>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(mc - c * CHUNK);
            let mut rng = rng_from(seed, &[c as u64]);
            let mut buf = vec![0u64; len];
            let mut ps = Vec::with_capacity(len + 1);
            (0..n)
                .map(|_| {
                    fill_given_total(kind, &mut buf, total, &mut rng);
                    fill_partial_sums(&buf, &mut ps);
                    ev.eval(&ps).0
                })
                .collect()
        })
        .collect();
    let mut samples: Vec<F> = parts.concat();
    samples.sort_by(|a, b| a.partial_cmp(b).expect("statistics are never NaN"));
    samples
}

fn calibrate_with<F: Real>(
    ev: &Evaluator<F>,
    stat: StatisticId,
    kind: SeriesKind,
    len: usize,
    total: u64,
    mc_count: usize,
    seed: u64,
) -> NullCalibration<F> {
    NullCalibration {
        statistic: stat,
        kind,
        len,
        total,
        samples: draw(ev, kind, len, total, mc_count, seed),
        seed,
    }
}

/// Simulates the conditional null law of `stat` given `S_T = s_total`.
pub fn calibrate_null<F: Real>(
    stat: StatisticId,
    kind: SeriesKind,
    len: usize,
    s_total: u64,
    mc_count: usize,
    seed: u64,
) -> Result<NullCalibration<F>> {
    check_mc(mc_count)?;
    check_shape(kind, len, s_total)?;
    let ev = Evaluator::new(stat, kind, len, s_total)?;
    Ok(calibrate_with(&ev, stat, kind, len, s_total, mc_count, seed))
}

type CalKey = (StatisticId, SeriesKind, usize, u64, usize, u64);
type EvalKey = (StatisticId, SeriesKind, usize, u64);

/// Shared store of calibrations and evaluators, optionally mirrored on disk.
///
/// Reads take a shared lock; a miss computes outside any lock and inserts
/// under the exclusive lock (the first insert wins, so concurrent misses on the
/// same key still agree because computation is deterministic).
#[derive(Debug, Default)]
pub struct CalibrationCache<F> {
    dir: Option<PathBuf>,
    calibrations: RwLock<HashMap<CalKey, Arc<NullCalibration<F>>>>,
    evaluators: RwLock<HashMap<EvalKey, Arc<Evaluator<F>>>>,
}

impl<F: Real> CalibrationCache<F> {
    pub fn new() -> Self {
        Self {
            dir: None,
            calibrations: RwLock::default(),
            evaluators: RwLock::default(),
        }
    }

    /// Cache that also loads and stores calibration tables under `dir`.
    pub fn persistent(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::new()
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Number of calibrations held in memory.
    pub fn len(&self) -> usize {
        self.calibrations.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn evaluator(
        &self,
        stat: StatisticId,
        kind: SeriesKind,
        len: usize,
        total: u64,
    ) -> Result<Arc<Evaluator<F>>> {
        let key = (stat, kind, len, total);
        if let Some(ev) = self.evaluators.read().expect("cache lock poisoned").get(&key) {
            return Ok(ev.clone());
        }
        let ev = Arc::new(Evaluator::new(stat, kind, len, total)?);
        let mut map = self.evaluators.write().expect("cache lock poisoned");
        Ok(map.entry(key).or_insert(ev).clone())
    }

    /// Calibration for the key, computed (or loaded from disk) on first use.
    pub fn calibration(
        &self,
        stat: StatisticId,
        kind: SeriesKind,
        len: usize,
        total: u64,
        mc_count: usize,
        seed: u64,
    ) -> Result<Arc<NullCalibration<F>>> {
        check_mc(mc_count)?;
        check_shape(kind, len, total)?;
        let key = (stat, kind, len, total, mc_count, seed);
        if let Some(c) = self.calibrations.read().expect("cache lock poisoned").get(&key) {
            return Ok(c.clone());
        }
        let loaded = self.load(&key);
        let cal = match loaded {
            Some(c) => c,
            None => {
                let ev = self.evaluator(stat, kind, len, total)?;
                let c = calibrate_with(&ev, stat, kind, len, total, mc_count, seed);
                self.store(&c)?;
                c
            }
        };
        let mut map = self.calibrations.write().expect("cache lock poisoned");
        Ok(map.entry(key).or_insert_with(|| Arc::new(cal)).clone())
    }

    fn path_for(&self, key: &CalKey) -> Option<PathBuf> {
        let (stat, kind, len, total, mc, seed) = key;
        self.dir.as_ref().map(|d| {
            d.join(format!(
                "{}-{}-T{}-S{}-n{}-s{:016x}-{}.cal",
                stat.file_tag(),
                kind,
                len,
                total,
                mc,
                seed,
                scalar_name::<F>()
            ))
        })
    }

    fn header(key: &CalKey) -> Vec<(&'static str, String)> {
        let (stat, kind, len, total, mc, seed) = key;
        vec![
            ("statistic", stat.label()),
            ("kind", kind.to_string()),
            ("length", len.to_string()),
            ("total", total.to_string()),
            ("mc_count", mc.to_string()),
            ("seed", seed.to_string()),
            ("scalar", scalar_name::<F>().into()),
        ]
    }

    fn load(&self, key: &CalKey) -> Option<NullCalibration<F>> {
        let path = self.path_for(key)?;
        let table = persist::read(&path).ok()?;
        let matches = Self::header(key).iter().all(|(k, v)| table.header.get(*k) == Some(v));
        if !matches || table.samples.len() != key.4 {
            return None;
        }
        Some(NullCalibration {
            statistic: key.0,
            kind: key.1,
            len: key.2,
            total: key.3,
            samples: table.samples.into_iter().map(F::of).collect(),
            seed: key.5,
        })
    }

    fn store(&self, cal: &NullCalibration<F>) -> Result<()> {
        let key = (cal.statistic, cal.kind, cal.len, cal.total, cal.mc_count(), cal.seed);
        if let Some(path) = self.path_for(&key) {
            let samples: Vec<f64> = cal.samples.iter().map(|s| s.as_f64()).collect();
            persist::write(&path, &Self::header(&key), &samples)?;
        }
        Ok(())
    }
}

pub(crate) fn scalar_name<F: Real>() -> &'static str {
    if std::mem::size_of::<F>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// Runs exact conditional tests with a shared calibration cache.
#[derive(Clone, Debug)]
pub struct ExactEngine<F> {
    cache: Arc<CalibrationCache<F>>,
    mc_count: usize,
    seed: u64,
}

impl<F: Real> ExactEngine<F> {
    pub fn new(mc_count: usize, seed: u64) -> Result<Self> {
        Self::with_cache(Arc::new(CalibrationCache::new()), mc_count, seed)
    }

    pub fn with_cache(cache: Arc<CalibrationCache<F>>, mc_count: usize, seed: u64) -> Result<Self> {
        check_mc(mc_count)?;
        Ok(Self { cache, mc_count, seed })
    }

    pub fn cache(&self) -> &Arc<CalibrationCache<F>> {
        &self.cache
    }

    pub fn mc_count(&self) -> usize {
        self.mc_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Calibration the engine would use for a series with this shape.
    pub fn calibration_for(
        &self,
        stat: StatisticId,
        kind: SeriesKind,
        len: usize,
        total: u64,
    ) -> Result<Arc<NullCalibration<F>>> {
        let seed = calibration_seed(self.seed, stat, kind, len, total);
        self.cache.calibration(stat, kind, len, total, self.mc_count, seed)
    }

    /// Exact test of `series` with `stat`: upper-tail Monte Carlo p-value for
    /// CUSUM and LR, the multiplicity-corrected minimum p-value test for minP.
    pub fn test(&self, series: &ChannelSeries, stat: StatisticId, alpha: F) -> Result<TestOutcome<F>> {
        check_alpha(alpha)?;
        let (kind, len, total) = (series.kind(), series.len(), series.total());
        let ev = self.cache.evaluator(stat, kind, len, total)?;
        let (observed, arg) = ev.eval(&series.partial_sums());
        if series.is_degenerate() {
            return Ok(TestOutcome::degenerate(observed, alpha));
        }
        let cal = self.calibration_for(stat, kind, len, total)?;
        Ok(decide(&cal, stat, observed, arg, alpha))
    }

    /// Monte Carlo p-value and location estimate, without a decision.
    /// Degenerate series get `(1, 1)`.
    pub fn pvalue(&self, series: &ChannelSeries, stat: StatisticId) -> Result<(F, usize)> {
        self.pvalue_of(series.kind(), series.values(), stat)
    }

    pub(crate) fn pvalue_of(&self, kind: SeriesKind, values: &[u64], stat: StatisticId) -> Result<(F, usize)> {
        let len = values.len();
        let total: u64 = values.iter().sum();
        if kind.is_degenerate(len, total) {
            return Ok((F::one(), 1));
        }
        let ev = self.cache.evaluator(stat, kind, len, total)?;
        let mut ps = Vec::with_capacity(len + 1);
        fill_partial_sums(values, &mut ps);
        let (observed, arg) = ev.eval(&ps);
        let cal = self.calibration_for(stat, kind, len, total)?;
        let p = match stat {
            StatisticId::MinP => cal.lower_pvalue(observed),
            _ => cal.upper_pvalue(observed),
        };
        Ok((p, arg))
    }

    /// Computes, in parallel, every calibration needed for the given
    /// `(length, total)` shapes that is not cached yet.
    pub fn prefetch(&self, stat: StatisticId, kind: SeriesKind, shapes: &[(usize, u64)]) -> Result<()> {
        let mut todo: Vec<(usize, u64)> = shapes
            .iter()
            .copied()
            .filter(|&(len, total)| !kind.is_degenerate(len, total))
            .collect();
        todo.sort_unstable();
        todo.dedup();
        todo.into_par_iter()
            .try_for_each(|(len, total)| self.calibration_for(stat, kind, len, total).map(|_| ()))
    }
}

fn decide<F: Real>(cal: &NullCalibration<F>, stat: StatisticId, observed: F, arg: usize, alpha: F) -> TestOutcome<F> {
    let (p_value, reject) = match stat {
        StatisticId::MinP => {
            let r = cal.lower_quantile(alpha);
            (cal.lower_pvalue(observed), observed <= r + tie_slack(r))
        }
        _ => {
            let p = cal.upper_pvalue(observed);
            (p, p <= alpha)
        }
    };
    TestOutcome {
        statistic: observed,
        p_value,
        reject,
        alpha,
        changepoint_estimate: arg,
        calibration: CalibrationRef::of(cal),
    }
}

fn run_uncached<F: Real>(
    series: &ChannelSeries,
    stat: StatisticId,
    alpha: F,
    mc_count: usize,
    seed: u64,
) -> Result<TestOutcome<F>> {
    check_alpha(alpha)?;
    check_mc(mc_count)?;
    let (kind, len, total) = (series.kind(), series.len(), series.total());
    let ev = Evaluator::new(stat, kind, len, total)?;
    let (observed, arg) = ev.eval(&series.partial_sums());
    if series.is_degenerate() {
        return Ok(TestOutcome::degenerate(observed, alpha));
    }
    let cal_seed = calibration_seed(seed, stat, kind, len, total);
    let cal = calibrate_with(&ev, stat, kind, len, total, mc_count, cal_seed);
    Ok(decide(&cal, stat, observed, arg, alpha))
}

/// Exact conditional CUSUM or LR test with Monte Carlo p-value
/// `(1 + #{null >= observed}) / (mc + 1)`.
pub fn exact_test<F: Real>(
    series: &ChannelSeries,
    stat: StatisticId,
    alpha: F,
    mc_count: usize,
    seed: u64,
) -> Result<TestOutcome<F>> {
    if stat == StatisticId::MinP {
        return Err(Error::config(
            "the minimum p-value statistic is tested with minp_multiplicity_test",
        ));
    }
    run_uncached(series, stat, alpha, mc_count, seed)
}

/// Minimum p-value test: rejects when `p_(1)` is at most the lower
/// `alpha`-quantile of its simulated conditional null law.
pub fn minp_multiplicity_test<F: Real>(
    series: &ChannelSeries,
    alpha: F,
    mc_count: usize,
    seed: u64,
) -> Result<TestOutcome<F>> {
    run_uncached(series, StatisticId::MinP, alpha, mc_count, seed)
}
