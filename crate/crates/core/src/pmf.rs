// SPDX-License-Identifier: MIT OR Apache-2.0

//! Conditional null laws of the partial sums given the grand total.
//!
//! Given `S_T`, a Bernoulli series is a uniformly random arrangement of `S_T`
//! ones, so `S_i | S_T` is hypergeometric; a Poisson series is multinomial with
//! equal cell probabilities, so `S_i | S_T` is binomial with success
//! probability `i / T`. Neither law depends on the unknown rate.

use crate::error::{Error, Result};
use crate::num::{ln_choose, Real};
use crate::series::{ChannelSeries, SeriesKind};
use rand::seq::index;
use rand::Rng;

/// Natural log of a probability; `-inf` encodes zero mass.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogPmf<F>(pub F);

impl<F: Real> LogPmf<F> {
    pub fn zero_mass() -> Self {
        LogPmf(F::neg_infinity())
    }

    pub fn log_prob(self) -> F {
        self.0
    }

    pub fn prob(self) -> F {
        self.0.exp()
    }
}

/// Support `[lo, hi]` of Hypergeometric(draws, successes, population).
pub fn hypergeometric_support(draws: u64, successes: u64, population: u64) -> (u64, u64) {
    let lo = draws.saturating_sub(population - successes);
    let hi = draws.min(successes);
    (lo, hi)
}

/// `ln P(Q = q)` for `Q ~ Hypergeometric(draws, successes, population)`: the
/// number of marked items among `draws` taken without replacement from a
/// population of `population` holding `successes` marked items.
pub fn hypergeometric_log_pmf<F: Real>(q: i64, draws: u64, successes: u64, population: u64) -> Result<LogPmf<F>> {
    if draws > population || successes > population {
        return Err(Error::domain(format!(
            "hypergeometric requires draws ({draws}) and successes ({successes}) <= population ({population})"
        )));
    }
    let (lo, hi) = hypergeometric_support(draws, successes, population);
    if q < lo as i64 || q > hi as i64 {
        return Ok(LogPmf::zero_mass());
    }
    let q = q as u64;
    let lp = ln_choose::<F>(successes, q) + ln_choose::<F>(population - successes, draws - q)
        - ln_choose::<F>(population, draws);
    Ok(LogPmf(lp.min(F::zero())))
}

/// `ln P(Q = q)` for `Q ~ Binomial(trials, p)`. The boundary rates 0 and 1
/// give exact point masses.
pub fn binomial_log_pmf<F: Real>(q: i64, trials: u64, p: F) -> Result<LogPmf<F>> {
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::domain(format!("binomial rate {p} outside [0, 1]")));
    }
    if q < 0 || q as u64 > trials {
        return Ok(LogPmf::zero_mass());
    }
    let q = q as u64;
    if p == F::zero() {
        return Ok(if q == 0 { LogPmf(F::zero()) } else { LogPmf::zero_mass() });
    }
    if p == F::one() {
        return Ok(if q == trials {
            LogPmf(F::zero())
        } else {
            LogPmf::zero_mass()
        });
    }
    let lp = ln_choose::<F>(trials, q) + F::of_u64(q) * p.ln() + F::of_u64(trials - q) * (-p).ln_1p();
    Ok(LogPmf(lp.min(F::zero())))
}

/// Uniformly random arrangement of `total` ones among `len` positions.
pub fn sample_binary_given_total<R: Rng + ?Sized>(len: usize, total: u64, rng: &mut R) -> Result<ChannelSeries> {
    if len < 2 {
        return Err(Error::domain(format!("series length {len} < 2")));
    }
    if total > len as u64 {
        return Err(Error::domain(format!("cannot place {total} ones in {len} positions")));
    }
    let mut values = vec![0u64; len];
    fill_binary_given_total(&mut values, total as usize, rng);
    Ok(ChannelSeries::from_parts_unchecked(SeriesKind::Binary, values))
}

/// Counts summing to `total`, each unit landing in a uniformly chosen epoch.
pub fn sample_counts_given_total<R: Rng + ?Sized>(len: usize, total: u64, rng: &mut R) -> Result<ChannelSeries> {
    if len < 2 {
        return Err(Error::domain(format!("series length {len} < 2")));
    }
    let mut values = vec![0u64; len];
    fill_counts_given_total(&mut values, total, rng);
    Ok(ChannelSeries::from_parts_unchecked(SeriesKind::Count, values))
}

pub(crate) fn fill_binary_given_total<R: Rng + ?Sized>(buf: &mut [u64], total: usize, rng: &mut R) {
    let len = buf.len();
    // Choose whichever of the ones or the zeros is the smaller set.
    let (fill, mark, k) = if 2 * total <= len {
        (0, 1, total)
    } else {
        (1, 0, len - total)
    };
    buf.fill(fill);
    for pos in index::sample(rng, len, k).iter() {
        buf[pos] = mark;
    }
}

pub(crate) fn fill_counts_given_total<R: Rng + ?Sized>(buf: &mut [u64], total: u64, rng: &mut R) {
    let len = buf.len();
    buf.fill(0);
    for _ in 0..total {
        buf[rng.random_range(0..len)] += 1;
    }
}

pub(crate) fn fill_given_total<R: Rng + ?Sized>(kind: SeriesKind, buf: &mut [u64], total: u64, rng: &mut R) {
    match kind {
        SeriesKind::Binary => fill_binary_given_total(buf, total as usize, rng),
        SeriesKind::Count => fill_counts_given_total(buf, total, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300) || (a == b)
    }

    #[test]
    fn hypergeometric_examples() {
        let v = hypergeometric_log_pmf::<f64>(1, 1, 1, 2).unwrap().0;
        assert!(close(v, 0.5f64.ln()));
        let v = hypergeometric_log_pmf::<f64>(0, 3, 0, 5).unwrap().0;
        assert_eq!(v, 0.0);
        // C(5,2) C(5,2) / C(10,4) = 100 / 210
        let v = hypergeometric_log_pmf::<f64>(2, 4, 5, 10).unwrap().0;
        assert!(close(v, (100.0f64 / 210.0).ln()), "{v}");
    }

    #[test]
    fn hypergeometric_out_of_support_and_domain() {
        assert_eq!(hypergeometric_log_pmf::<f64>(-1, 2, 2, 4).unwrap().0, f64::NEG_INFINITY);
        // i = 4 draws with K = 1 in T = 5: at most one success
        assert_eq!(hypergeometric_log_pmf::<f64>(2, 4, 1, 5).unwrap().0, f64::NEG_INFINITY);
        // must draw at least i - (T - K) = 4 - 2 = 2 successes
        assert_eq!(hypergeometric_log_pmf::<f64>(1, 4, 3, 5).unwrap().0, f64::NEG_INFINITY);
        assert!(hypergeometric_log_pmf::<f64>(0, 6, 1, 5).is_err());
        assert!(hypergeometric_log_pmf::<f64>(0, 1, 6, 5).is_err());
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial_log_pmf::<f64>(0, 4, 0.0).unwrap().0, 0.0);
        assert_eq!(binomial_log_pmf::<f64>(1, 4, 0.0).unwrap().0, f64::NEG_INFINITY);
        let v = binomial_log_pmf::<f64>(3, 5, 0.5).unwrap().0;
        assert!(close(v, (10.0f64 / 32.0).ln()));
        assert_eq!(binomial_log_pmf::<f64>(5, 5, 1.0).unwrap().0, 0.0);
        assert_eq!(binomial_log_pmf::<f64>(4, 5, 1.0).unwrap().0, f64::NEG_INFINITY);
        assert_eq!(binomial_log_pmf::<f64>(6, 5, 0.3).unwrap().0, f64::NEG_INFINITY);
        assert!(binomial_log_pmf::<f64>(0, 5, 1.5).is_err());
        assert!(binomial_log_pmf::<f64>(0, 5, -0.1).is_err());
        assert!(binomial_log_pmf::<f64>(0, 5, f64::NAN).is_err());
    }

    #[test]
    fn large_arguments_stay_finite() {
        let v = hypergeometric_log_pmf::<f64>(500, 5_000, 1_000, 10_000).unwrap().0;
        assert!(v.is_finite() && v < 0.0);
        let v = binomial_log_pmf::<f64>(500_000, 1_000_000, 0.5).unwrap().0;
        assert!(v.is_finite() && v < 0.0);
    }

    proptest! {
        #[test]
        fn hypergeometric_sums_to_one(t in 1u64..120, k_frac in 0.0f64..=1.0, i_frac in 0.0f64..=1.0) {
            let k = (k_frac * t as f64).round() as u64;
            let i = (i_frac * t as f64).round() as u64;
            let total: f64 = (0..=i as i64)
                .map(|q| hypergeometric_log_pmf::<f64>(q, i, k, t).unwrap().prob())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "sum {}", total);
        }

        #[test]
        fn binomial_sums_to_one(n in 0u64..400, p in 0.0f64..=1.0) {
            let total: f64 = (0..=n as i64)
                .map(|q| binomial_log_pmf::<f64>(q, n, p).unwrap().prob())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "sum {}", total);
        }

        #[test]
        fn samplers_preserve_total(len in 2usize..60, frac in 0.0f64..=1.0, extra in 0u64..200, seed: u64) {
            let total = (frac * len as f64).round() as u64;
            let mut rng = rng_from(seed, &[]);
            let b = sample_binary_given_total(len, total, &mut rng).unwrap();
            prop_assert_eq!(b.total(), total);
            prop_assert!(b.values().iter().all(|&v| v <= 1));
            let c = sample_counts_given_total(len, extra, &mut rng).unwrap();
            prop_assert_eq!(c.total(), extra);
        }
    }

    #[test]
    fn forced_arrangements() {
        let mut rng = rng_from(1, &[]);
        assert_eq!(sample_binary_given_total(3, 0, &mut rng).unwrap().values(), &[0, 0, 0]);
        assert_eq!(sample_binary_given_total(3, 3, &mut rng).unwrap().values(), &[1, 1, 1]);
        assert_eq!(
            sample_counts_given_total(5, 0, &mut rng).unwrap().values(),
            &[0, 0, 0, 0, 0]
        );
        assert!(sample_binary_given_total(3, 4, &mut rng).is_err());
    }

    #[test]
    fn samplers_are_reproducible() {
        let a = sample_counts_given_total(10, 25, &mut rng_from(42, &[1])).unwrap();
        let b = sample_counts_given_total(10, 25, &mut rng_from(42, &[1])).unwrap();
        assert_eq!(a, b);
        let a = sample_binary_given_total(30, 11, &mut rng_from(42, &[2])).unwrap();
        let b = sample_binary_given_total(30, 11, &mut rng_from(42, &[2])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_arrangements_are_uniform() {
        // All C(4,2) = 6 arrangements enumerated; each has probability 1/6.
        let n = 60_000;
        let mut rng = rng_from(2024, &[]);
        let mut freq: HashMap<Vec<u64>, usize> = HashMap::new();
        for _ in 0..n {
            let s = sample_binary_given_total(4, 2, &mut rng).unwrap();
            *freq.entry(s.into_values()).or_default() += 1;
        }
        assert_eq!(freq.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (arr, c) in freq {
            let f = c as f64 / n as f64;
            assert!((f - p).abs() <= 4.5 * sigma, "{arr:?}: {f}");
        }
    }

    #[test]
    fn single_count_splits_evenly() {
        let n = 40_000;
        let mut rng = rng_from(77, &[]);
        let hits = (0..n)
            .filter(|_| sample_counts_given_total(2, 1, &mut rng).unwrap().values()[0] == 1)
            .count();
        let f = hits as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((f - 0.5).abs() <= 4.5 * sigma, "{f}");
    }

    #[test]
    fn count_prefix_is_binomial() {
        // S_2 | S_4 = 3 ~ Binomial(3, 1/2): probabilities 1/8, 3/8, 3/8, 1/8.
        let n = 40_000usize;
        let mut rng = rng_from(5, &[]);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = sample_counts_given_total(4, 3, &mut rng).unwrap();
            counts[(s.values()[0] + s.values()[1]) as usize] += 1;
        }
        let expected = [1.0, 3.0, 3.0, 1.0].map(|w| w / 8.0 * n as f64);
        let chi2: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&o, e)| (o as f64 - e).powi(2) / e)
            .sum();
        // upper 1e-3 point of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }
}
