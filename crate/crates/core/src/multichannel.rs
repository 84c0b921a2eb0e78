// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multichannel changepoint testing.
//!
//! Local testing runs an exact test in every channel and controls the FDR of
//! the per-channel decisions; the global null is rejected when any channel is.
//! Global testing pools the channels into one Euclidean-norm CUSUM statistic
//! calibrated by jointly permuting time points.

use crate::error::{Error, Result};
use crate::exact::{check_alpha, ExactEngine, StatisticId};
use crate::multitest::{FdrMethod, PValueSet, RejectionSet};
use crate::num::{tie_slack, Real};
use crate::seed::rng_from;
use crate::series::{ChannelSeries, SeriesKind};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// `m` channels of equal length `T`, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    kind: SeriesKind,
    channel_ids: Vec<String>,
    len: usize,
    data: Vec<u64>,
}

impl ChannelMatrix {
    pub fn new(kind: SeriesKind, channel_ids: Vec<String>, rows: Vec<Vec<u64>>) -> Result<Self> {
        if channel_ids.len() != rows.len() {
            return Err(Error::Series(format!(
                "{} channel ids for {} rows",
                channel_ids.len(),
                rows.len()
            )));
        }
        let len = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && len < 2 {
            return Err(Error::Series(format!("channels need at least 2 epochs, got {len}")));
        }
        let mut data = Vec::with_capacity(rows.len() * len);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != len {
                return Err(Error::Series(format!(
                    "channel {} has {} epochs, expected {len}",
                    channel_ids[j],
                    row.len()
                )));
            }
            if kind == SeriesKind::Binary {
                if let Some(t) = row.iter().position(|&v| v > 1) {
                    return Err(Error::Series(format!(
                        "channel {} holds {} at epoch {} of a binary matrix",
                        channel_ids[j],
                        row[t],
                        t + 1
                    )));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            kind,
            channel_ids,
            len,
            data,
        })
    }

    /// Channels labelled `1..m`.
    pub fn unlabeled(kind: SeriesKind, rows: Vec<Vec<u64>>) -> Result<Self> {
        let ids = (1..=rows.len()).map(|j| j.to_string()).collect();
        Self::new(kind, ids, rows)
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    /// Number of channels `m`.
    pub fn channels(&self) -> usize {
        self.channel_ids.len()
    }

    /// Number of epochs `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.channel_ids.is_empty()
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        (0..self.channels()).map(move |j| self.row(j))
    }

    pub fn series(&self, j: usize) -> ChannelSeries {
        ChannelSeries::from_parts_unchecked(self.kind, self.row(j).to_vec())
    }

    /// Keeps the channels for which `keep` holds, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for j in 0..self.channels() {
            if keep(j) {
                ids.push(self.channel_ids[j].clone());
                data.extend_from_slice(self.row(j));
            }
        }
        Self {
            kind: self.kind,
            channel_ids: ids,
            len: self.len,
            data,
        }
    }
}

/// Outcome of a local (per-channel) multichannel test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalResult<F> {
    pub pvals: PValueSet<F>,
    pub rejections: RejectionSet<F>,
    /// Location estimate for every channel (1 for constant channels).
    pub estimates: Vec<usize>,
    pub global_reject: bool,
}

impl<F: Real> LocalResult<F> {
    /// Estimated changepoint of each rejected channel, keyed by channel index.
    pub fn changepoint_estimates(&self) -> BTreeMap<usize, usize> {
        self.rejections
            .rejected
            .iter()
            .map(|&j| (j, self.estimates[j]))
            .collect()
    }
}

/// Exact p-values and location estimates for every channel.
pub fn channel_pvalues<F: Real>(
    engine: &ExactEngine<F>,
    matrix: &ChannelMatrix,
    stat: StatisticId,
) -> Result<(Vec<F>, Vec<usize>)> {
    let shapes: Vec<(usize, u64)> = matrix.rows().map(|r| (r.len(), r.iter().sum())).collect();
    engine.prefetch(stat, matrix.kind(), &shapes)?;
    let out: Vec<(F, usize)> = (0..matrix.channels())
        .into_par_iter()
        .map(|j| engine.pvalue_of(matrix.kind(), matrix.row(j), stat))
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

/// Local test with a fresh calibration cache.
pub fn local_test<F: Real>(
    matrix: &ChannelMatrix,
    stat: StatisticId,
    fdr: FdrMethod,
    alpha: F,
    mc_count: usize,
    seed: u64,
) -> Result<LocalResult<F>> {
    local_test_with(&ExactEngine::new(mc_count, seed)?, matrix, stat, fdr, alpha)
}

/// Local test reusing the engine's calibration cache.
pub fn local_test_with<F: Real>(
    engine: &ExactEngine<F>,
    matrix: &ChannelMatrix,
    stat: StatisticId,
    fdr: FdrMethod,
    alpha: F,
) -> Result<LocalResult<F>> {
    check_alpha(alpha)?;
    let (p, estimates) = channel_pvalues(engine, matrix, stat)?;
    let pvals = PValueSet::new(p, matrix.channel_ids().to_vec())?;
    let rejections = fdr.apply(&pvals, alpha)?;
    let global_reject = !rejections.is_empty();
    Ok(LocalResult {
        pvals,
        rejections,
        estimates,
        global_reject,
    })
}

/// Exact evaluator of the pooled CUSUM over column permutations.
///
/// With `E_j(t) = T P_j(t) - t S_j` (`P_j` the prefix sum of channel `j`),
/// `||E(t)||^2 = T^2 Σ P_j^2 - 2tT Σ P_j S_j + t^2 Σ S_j^2`. The first two
/// sums change only where a column has non-zero entries, so a pass over a
/// permuted matrix costs `O(T + nnz)` and is carried out in exact integer
/// arithmetic; the statistic at `t` is `w_t ||E(t)|| / (t (T - t))`.
#[derive(Clone, Debug)]
pub struct GlobalCusum {
    len: usize,
    columns: Vec<Vec<(u32, u64)>>,
    totals: Vec<u64>,
    sum_sq_totals: i128,
}

impl GlobalCusum {
    pub fn new(matrix: &ChannelMatrix) -> Self {
        let len = matrix.len();
        let mut columns = vec![Vec::new(); len];
        let mut totals = vec![0u64; matrix.channels()];
        for (j, row) in matrix.rows().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                if v != 0 {
                    columns[t].push((j as u32, v));
                    totals[j] += v;
                }
            }
        }
        let sum_sq_totals = totals.iter().map(|&s| (s as i128) * (s as i128)).sum();
        Self {
            len,
            columns,
            totals,
            sum_sq_totals,
        }
    }

    /// Squared norms `||E(t)||^2` for `t = 1..T-1` under the column order
    /// `order`, written into `out`.
    pub fn norms_sq(&self, order: &[usize], prefix: &mut [u64], out: &mut Vec<i128>) {
        prefix.fill(0);
        out.clear();
        let tl = self.len as i128;
        let (mut a, mut b) = (0i128, 0i128);
        for (k, &col) in order.iter().take(self.len - 1).enumerate() {
            for &(j, x) in &self.columns[col] {
                let j = j as usize;
                let p = prefix[j] as i128;
                let x = x as i128;
                a += 2 * p * x + x * x;
                b += self.totals[j] as i128 * x;
                prefix[j] += x as u64;
            }
            let t = (k + 1) as i128;
            out.push(tl * tl * a - 2 * t * tl * b + t * t * self.sum_sq_totals);
        }
    }

    pub fn channels(&self) -> usize {
        self.totals.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Per-`t` coefficients `[t/T (1 - t/T)]^delta / (t (T - t))`.
fn global_weights<F: Real>(len: usize, delta: F) -> Vec<F> {
    let tl = F::of_usize(len);
    (1..len)
        .map(|t| {
            let u = F::of_usize(t) / tl;
            let w = if delta == F::zero() {
                F::one()
            } else {
                (u * (F::one() - u)).powf(delta)
            };
            w / (F::of_usize(t) * F::of_usize(len - t))
        })
        .collect()
}

fn max_weighted<F: Real>(norms: &[i128], weights: &[F]) -> F {
    norms
        .iter()
        .zip(weights)
        .map(|(&n, &w)| w * F::of(n as f64).sqrt())
        .fold(F::zero(), F::max)
}

/// `max_t [t/T (1 - t/T)]^delta || mean_{1..t} - mean_{t+1..T} ||_2`.
pub fn global_cusum_statistic<F: Real>(matrix: &ChannelMatrix, delta: F) -> Result<F> {
    check_delta(delta)?;
    if matrix.is_empty() {
        return Ok(F::zero());
    }
    let g = GlobalCusum::new(matrix);
    let order: Vec<usize> = (0..matrix.len()).collect();
    let mut prefix = vec![0u64; matrix.channels()];
    let mut norms = Vec::with_capacity(matrix.len());
    g.norms_sq(&order, &mut prefix, &mut norms);
    Ok(max_weighted(&norms, &global_weights(matrix.len(), delta)))
}

fn check_delta<F: Real>(delta: F) -> Result<()> {
    if delta >= F::zero() && delta <= F::one() {
        Ok(())
    } else {
        Err(Error::config(format!("CUSUM exponent {delta} outside [0, 1]")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalResult<F> {
    pub statistic: F,
    pub delta: F,
    pub p_value: F,
    pub reject: bool,
    pub permutations: usize,
}

/// Permutation options beyond the statistic itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermutationOptions {
    pub permutations: usize,
    pub seed: u64,
    /// Split ties uniformly at random for a test of exact size.
    pub randomized: bool,
}

pub const MIN_PERMUTATIONS: usize = 99;
pub const DEFAULT_PERMUTATIONS: usize = 1000;

const PERM_CHUNK: usize = 64;

/// Global permutation test at one exponent.
pub fn global_permutation_test<F: Real>(
    matrix: &ChannelMatrix,
    delta: F,
    permutations: usize,
    alpha: F,
    seed: u64,
) -> Result<GlobalResult<F>> {
    let opts = PermutationOptions {
        permutations,
        seed,
        randomized: false,
    };
    Ok(global_permutation_tests(matrix, &[delta], alpha, opts)?.remove(0))
}

/// Global permutation tests at several exponents sharing the same
/// permutations. The p-value is `(1 + #{permuted >= observed}) / (B + 1)`,
/// or with `randomized`, `(#{>} + U (1 + #{=})) / (B + 1)`.
pub fn global_permutation_tests<F: Real>(
    matrix: &ChannelMatrix,
    deltas: &[F],
    alpha: F,
    opts: PermutationOptions,
) -> Result<Vec<GlobalResult<F>>> {
    check_alpha(alpha)?;
    for &d in deltas {
        check_delta(d)?;
    }
    if opts.permutations < MIN_PERMUTATIONS {
        return Err(Error::config(format!(
            "{} permutations, at least {MIN_PERMUTATIONS} required",
            opts.permutations
        )));
    }
    let len = matrix.len();
    let g = GlobalCusum::new(matrix);
    let weights: Vec<Vec<F>> = deltas.iter().map(|&d| global_weights(len, d)).collect();
    let identity: Vec<usize> = (0..len).collect();
    let mut prefix = vec![0u64; g.channels()];
    let mut norms = Vec::with_capacity(len);
    g.norms_sq(&identity, &mut prefix, &mut norms);
    let observed: Vec<F> = weights.iter().map(|w| max_weighted(&norms, w)).collect();

    let b = opts.permutations;
    let chunks = b.div_ceil(PERM_CHUNK);
    // (greater, equal) counts per exponent
    let counts: Vec<Vec<(usize, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = PERM_CHUNK.min(b - c * PERM_CHUNK);
            let mut rng = rng_from(opts.seed, &[c as u64]);
            let mut order = identity.clone();
            let mut prefix = vec![0u64; g.channels()];
            let mut norms = Vec::with_capacity(len);
            let mut acc = vec![(0usize, 0usize); deltas.len()];
            for _ in 0..n {
                for i in (1..len).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                g.norms_sq(&order, &mut prefix, &mut norms);
                for (k, w) in weights.iter().enumerate() {
                    let v = max_weighted(&norms, w);
                    let obs = observed[k];
                    let slack = tie_slack(obs);
                    if v > obs + slack {
                        acc[k].0 += 1;
                    } else if v >= obs - slack {
                        acc[k].1 += 1;
                    }
                }
            }
            acc
        })
        .collect();

    let mut tie_rng = rng_from(opts.seed, &[u64::MAX]);
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let (gt, eq) = counts.iter().fold((0, 0), |(g0, e0), c| (g0 + c[k].0, e0 + c[k].1));
            let denom = F::of_usize(b + 1);
            let p_value = if opts.randomized {
                let u = F::of(tie_rng.random::<f64>());
                (F::of_usize(gt) + u * F::of_usize(eq + 1)) / denom
            } else {
                F::of_usize(1 + gt + eq) / denom
            };
            GlobalResult {
                statistic: observed[k],
                delta,
                p_value,
                reject: p_value <= alpha,
                permutations: b,
            }
        })
        .collect())
}

/// Which channels truly change, and where.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub changed_channels: BTreeSet<usize>,
    pub taus: Vec<usize>,
}

/// The parts of one replicate's result that the metrics need.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplicateDecision {
    pub global_reject: bool,
    pub rejected: Vec<usize>,
}

impl<F: Real> From<&LocalResult<F>> for ReplicateDecision {
    fn from(r: &LocalResult<F>) -> Self {
        Self {
            global_reject: r.global_reject,
            rejected: r.rejections.rejected.clone(),
        }
    }
}

impl<F: Real> From<&RejectionSet<F>> for ReplicateDecision {
    fn from(r: &RejectionSet<F>) -> Self {
        Self {
            global_reject: !r.is_empty(),
            rejected: r.rejected.clone(),
        }
    }
}

impl<F: Real> From<&GlobalResult<F>> for ReplicateDecision {
    fn from(r: &GlobalResult<F>) -> Self {
        Self {
            global_reject: r.reject,
            rejected: Vec::new(),
        }
    }
}

/// Power and error summaries over replicates, with binomial standard
/// errors `sqrt(r (1 - r) / n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub replicates: usize,
    pub p_gcd: f64,
    pub tpr: f64,
    pub fdr: f64,
    pub se_p_gcd: f64,
    pub se_tpr: f64,
    pub se_fdr: f64,
}

/// P(gCD), mean TP / max(1, n_cp) and mean FP / max(1, |R|).
pub fn evaluate_metrics(results: &[ReplicateDecision], truth: &TruthSpec) -> Metrics {
    let n = results.len();
    if n == 0 {
        return Metrics {
            replicates: 0,
            p_gcd: 0.0,
            tpr: 0.0,
            fdr: 0.0,
            se_p_gcd: 0.0,
            se_tpr: 0.0,
            se_fdr: 0.0,
        };
    }
    let n_cp = truth.changed_channels.len().max(1) as f64;
    let mut gcd = Vec::with_capacity(n);
    let mut tpr = Vec::with_capacity(n);
    let mut fdr = Vec::with_capacity(n);
    for r in results {
        let tp = r.rejected.iter().filter(|j| truth.changed_channels.contains(j)).count();
        let fp = r.rejected.len() - tp;
        gcd.push(if r.global_reject { 1.0 } else { 0.0 });
        tpr.push(tp as f64 / n_cp);
        fdr.push(fp as f64 / r.rejected.len().max(1) as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let se = |r: f64| (r * (1.0 - r) / n as f64).sqrt();
    let (g, t, f) = (mean(&gcd), mean(&tpr), mean(&fdr));
    Metrics {
        replicates: n,
        p_gcd: g,
        tpr: t,
        fdr: f,
        se_p_gcd: se(g),
        se_tpr: se(t),
        se_fdr: se(f),
    }
}
