// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles: exhaustive enumeration of conditional null laws and
//! statistics computed straight from their definitions.

#![allow(dead_code)]

use exactcp::exact::NullCalibration;
use exactcp::{SeriesKind, StatisticId};

/// Every series of length `len` summing to `total`, with its conditional
/// probability (uniform for binary, multinomial for counts).
pub fn enumerate(kind: SeriesKind, len: usize, total: u64) -> Vec<(Vec<u64>, f64)> {
    let cap = match kind {
        SeriesKind::Binary => 1,
        SeriesKind::Count => total,
    };
    let mut all = Vec::new();
    let mut cur = vec![0u64; len];
    compositions(&mut cur, 0, total, cap, &mut all);
    let weights: Vec<f64> = all
        .iter()
        .map(|v| match kind {
            SeriesKind::Binary => 1.0,
            SeriesKind::Count => {
                // S! / prod(x_i!) / T^S
                let log_w =
                    ln_fact(total) - v.iter().map(|&x| ln_fact(x)).sum::<f64>() - total as f64 * (len as f64).ln();
                log_w.exp()
            }
        })
        .collect();
    let norm: f64 = weights.iter().sum();
    all.into_iter().zip(weights).map(|(v, w)| (v, w / norm)).collect()
}

fn compositions(cur: &mut Vec<u64>, pos: usize, left: u64, cap: u64, out: &mut Vec<Vec<u64>>) {
    if pos + 1 == cur.len() {
        if left <= cap {
            cur[pos] = left;
            out.push(cur.clone());
        }
        return;
    }
    for x in 0..=left.min(cap) {
        cur[pos] = x;
        compositions(cur, pos + 1, left - x, cap, out);
    }
}

fn ln_fact(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn prefix(values: &[u64]) -> Vec<u64> {
    let mut out = vec![0];
    for &v in values {
        out.push(out.last().unwrap() + v);
    }
    out
}

/// `max_t [t/T (1 - t/T)]^delta |S_t / t - (S - S_t) / (T - t)|` over
/// `1 <= t <= T - 1`.
pub fn cusum(values: &[u64], delta: f64) -> f64 {
    let n = values.len();
    let ps = prefix(values);
    let s = ps[n] as f64;
    (1..n)
        .map(|t| {
            let tt = t as f64;
            let frac = tt / n as f64;
            let w = (frac * (1.0 - frac)).powf(delta);
            w * (ps[t] as f64 / tt - (s - ps[t] as f64) / (n as f64 - tt)).abs()
        })
        .fold(0.0, f64::max)
}

fn entropy(x: f64) -> f64 {
    let h = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.ln() };
    h(x) + h(1.0 - x)
}

fn g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (1.0 - x.ln())
    }
}

/// Likelihood-ratio statistic `-2 (l_0 - l_1)` from the profile likelihood.
pub fn lr(kind: SeriesKind, values: &[u64]) -> f64 {
    let n = values.len();
    let ps = prefix(values);
    let s = ps[n] as f64;
    let f = |x: f64| match kind {
        SeriesKind::Binary => entropy(x),
        SeriesKind::Count => g(x),
    };
    let best = (1..n)
        .map(|t| {
            let tt = t as f64;
            let rest = n as f64 - tt;
            tt * f(ps[t] as f64 / tt) + rest * f((s - ps[t] as f64) / rest)
        })
        .fold(f64::INFINITY, f64::min);
    (-2.0 * (-(n as f64) * f(s / n as f64) + best)).max(0.0)
}

/// Law of `S_i` given the total, by summing enumerated probabilities.
pub fn split_law(kind: SeriesKind, len: usize, total: u64, i: usize) -> Vec<f64> {
    let mut law = vec![0.0; total as usize + 1];
    for (v, w) in enumerate(kind, len, total) {
        law[v[..i].iter().sum::<u64>() as usize] += w;
    }
    law
}

/// Brute-force p-value vector: `p_i` is the probability of split sums no
/// more likely than the observed one.
pub fn minp_vector_with(laws: &[Vec<f64>], values: &[u64]) -> Vec<f64> {
    let ps = prefix(values);
    laws.iter()
        .enumerate()
        .map(|(k, law)| {
            let obs = law[ps[k + 1] as usize];
            let p: f64 = law.iter().filter(|&&q| q > 0.0 && q <= obs * (1.0 + 1e-9)).sum();
            p.min(1.0)
        })
        .collect()
}

pub fn split_laws(kind: SeriesKind, len: usize, total: u64) -> Vec<Vec<f64>> {
    (1..len).map(|i| split_law(kind, len, total, i)).collect()
}

/// Exact conditional law of a statistic: sorted `(value, probability)` atoms
/// with values closer than `1e-9` relative merged.
pub fn exact_law(stat: StatisticId, kind: SeriesKind, len: usize, total: u64) -> Vec<(f64, f64)> {
    let laws = split_laws(kind, len, total);
    let mut vals: Vec<(f64, f64)> = enumerate(kind, len, total)
        .into_iter()
        .map(|(v, w)| {
            let x = match stat {
                StatisticId::Cusum { delta } => cusum(&v, delta),
                StatisticId::Lr => lr(kind, &v),
                StatisticId::MinP => minp_vector_with(&laws, &v).into_iter().fold(1.0, f64::min),
            };
            (x, w)
        })
        .collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (x, w) in vals {
        match atoms.last_mut() {
            Some(last) if (x - last.0).abs() <= 1e-9 * x.abs().max(1e-12) => last.1 += w,
            _ => atoms.push((x, w)),
        }
    }
    atoms
}

/// Sup distance between the calibration's empirical CDF and an exact
/// discrete law, checked at every atom and just below it.
pub fn sup_distance(cal: &NullCalibration<f64>, atoms: &[(f64, f64)]) -> f64 {
    let samples = cal.samples();
    let n = samples.len() as f64;
    let mut cum = 0.0;
    let mut worst: f64 = 0.0;
    for &(x, w) in atoms {
        let tol = 1e-7 * x.abs().max(1e-9);
        let below = samples.partition_point(|&s| s < x - tol) as f64 / n;
        worst = worst.max((below - cum).abs());
        cum += w;
        let at = samples.partition_point(|&s| s <= x + tol) as f64 / n;
        worst = worst.max((at - cum).abs());
    }
    worst
}

/// DKW radius `sqrt(ln(2 / delta) / (2 n))`.
pub fn dkw(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Upper-`level` point of the Kolmogorov distribution (sup of the absolute
/// Brownian bridge), by bisection on `2 sum (-1)^(k+1) exp(-2 k^2 x^2)`.
pub fn kolmogorov_upper(level: f64) -> f64 {
    let tail = |x: f64| {
        2.0 * (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (0.3, 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
