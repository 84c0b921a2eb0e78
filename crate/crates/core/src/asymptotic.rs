// SPDX-License-Identifier: MIT OR Apache-2.0

//! Asymptotic CUSUM tests against a simulated Brownian-bridge functional.

use crate::error::{Error, Result};
use crate::exact::{check_alpha, scalar_name, CalibrationRef, TestOutcome};
use crate::num::{tie_slack, Real};
use crate::persist;
use crate::seed::rng_from;
use crate::series::{ChannelSeries, SeriesKind};
use crate::statistics::{cusum_statistic, CusumConfig};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub const DEFAULT_GRID_SIZE: usize = 1000;
pub const DEFAULT_BRIDGE_MC: usize = 100_000;
pub const MIN_GRID_SIZE: usize = 200;

const CHUNK: usize = 256;

/// Sorted draws of `max_{a<=t<=b} |B(t)| / (t(1-t))^(1-delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeNull<F> {
    delta: F,
    a: F,
    b: F,
    grid_size: usize,
    samples: Vec<F>,
    seed: u64,
}

impl<F: Real> BridgeNull<F> {
    pub fn delta(&self) -> F {
        self.delta
    }

    pub fn window(&self) -> (F, F) {
        (self.a, self.b)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
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

    /// Empirical upper quantile: smallest sample with at least `1 - level`
    /// of the draws at or below it.
    pub fn upper_quantile(&self, level: F) -> F {
        let n = self.samples.len();
        let k = ((F::one() - level) * F::of_usize(n)).ceil().to_usize().unwrap_or(n);
        self.samples[k.clamp(1, n) - 1]
    }

    /// `(1 + #{draws >= x}) / (mc + 1)`.
    pub fn pvalue(&self, x: F) -> F {
        let cut = x - tie_slack(x);
        let below = self.samples.partition_point(|&s| s < cut);
        F::of_usize(1 + self.samples.len() - below) / F::of_usize(self.samples.len() + 1)
    }

    fn header(delta: F, a: F, b: F, grid: usize, mc: usize, seed: u64) -> Vec<(&'static str, String)> {
        vec![
            ("table", "bridge".into()),
            ("delta", format!("{:016x}", delta.as_f64().to_bits())),
            ("a", format!("{:016x}", a.as_f64().to_bits())),
            ("b", format!("{:016x}", b.as_f64().to_bits())),
            ("grid_size", grid.to_string()),
            ("mc_count", mc.to_string()),
            ("seed", seed.to_string()),
            ("scalar", scalar_name::<F>().into()),
        ]
    }

    fn file_name(delta: F, a: F, b: F, grid: usize, mc: usize, seed: u64) -> String {
        format!(
            "bridge-d{}-a{:08x}-b{:08x}-g{grid}-n{mc}-s{seed:016x}-{}.cal",
            delta,
            (a.as_f64().to_bits() >> 32) as u32 ^ a.as_f64().to_bits() as u32,
            (b.as_f64().to_bits() >> 32) as u32 ^ b.as_f64().to_bits() as u32,
            scalar_name::<F>()
        )
    }
}

fn validate<F: Real>(delta: F, a: F, b: F, grid_size: usize, mc_count: usize) -> Result<(usize, usize)> {
    if !(delta >= F::zero() && delta <= F::one()) {
        return Err(Error::config(format!("bridge exponent {delta} outside [0, 1]")));
    }
    if !(a > F::zero() && b < F::one() && a < b) {
        return Err(Error::config(format!(
            "bridge window requires 0 < a < b < 1, got a = {a}, b = {b}"
        )));
    }
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::config(format!(
            "bridge grid {grid_size} below the minimum {MIN_GRID_SIZE}"
        )));
    }
    if mc_count < crate::exact::MIN_MC_COUNT {
        return Err(Error::config(format!("bridge Monte Carlo size {mc_count} too small")));
    }
    let n = F::of_usize(grid_size);
    let eps = F::of(1e-9);
    let lo = ((a * n - eps).ceil().to_usize().unwrap_or(1)).max(1);
    let hi = ((b * n + eps).floor().to_usize().unwrap_or(0)).min(grid_size - 1);
    if lo > hi {
        return Err(Error::config("bridge window contains no grid point"));
    }
    Ok((lo, hi))
}

/// One random-walk bridge: returns the weighted maximum and the signed bridge
/// value where it is attained.
fn bridge_draw<R: rand::Rng>(rng: &mut R, walk: &mut [f64], lo: usize, weights: &[f64]) -> (f64, f64) {
    let n = walk.len() - 1;
    let scale = (n as f64).sqrt().recip();
    walk[0] = 0.0;
    for k in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        walk[k] = walk[k - 1] + z * scale;
    }
    let end = walk[n];
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (j, &w) in weights.iter().enumerate() {
        let k = lo + j;
        let bridge = walk[k] - (k as f64 / n as f64) * end;
        let v = bridge.abs() * w;
        if v > best.0 {
            best = (v, bridge);
        }
    }
    best
}

fn simulate<F: Real>(delta: F, grid_size: usize, lo: usize, hi: usize, mc_count: usize, seed: u64) -> Vec<(f64, f64)> {
    let expo = 1.0 - delta.as_f64();
    let weights: Vec<f64> = (lo..=hi)
        .map(|k| {
            let t = k as f64 / grid_size as f64;
            (t * (1.0 - t)).powf(expo).recip()
        })
        .collect();
    let chunks = mc_count.div_ceil(CHUNK);
    let parts: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(mc_count - c * CHUNK);
            let mut rng = rng_from(seed, &[c as u64]);
            let mut walk = vec![0.0; grid_size + 1];
            (0..n).map(|_| bridge_draw(&mut rng, &mut walk, lo, &weights)).collect()
        })
        .collect();
    parts.concat()
}

/// Simulates the bridge functional on the grid `{k / grid_size}` restricted
/// to `[a, b]`.
pub fn simulate_bridge_null<F: Real>(
    delta: F,
    a: F,
    b: F,
    grid_size: usize,
    mc_count: usize,
    seed: u64,
) -> Result<BridgeNull<F>> {
    let (lo, hi) = validate(delta, a, b, grid_size, mc_count)?;
    let mut samples: Vec<F> = simulate(delta, grid_size, lo, hi, mc_count, seed)
        .into_iter()
        .map(|(v, _)| F::of(v))
        .collect();
    samples.sort_by(|x, y| x.partial_cmp(y).expect("bridge draws are finite"));
    Ok(BridgeNull {
        delta,
        a,
        b,
        grid_size,
        samples,
        seed,
    })
}

/// Default window `(1/T, (T-1)/T)` for series of length `len`.
pub fn default_window<F: Real>(len: usize) -> (F, F) {
    let t = F::of_usize(len);
    (t.recip(), (t - F::one()) / t)
}

/// Like [`simulate_bridge_null`], reusing a table stored under `dir` when one
/// with identical parameters exists and storing a fresh one otherwise.
pub fn bridge_null_cached<F: Real>(
    dir: Option<&Path>,
    delta: F,
    a: F,
    b: F,
    grid_size: usize,
    mc_count: usize,
    seed: u64,
) -> Result<BridgeNull<F>> {
    let Some(dir) = dir else {
        return simulate_bridge_null(delta, a, b, grid_size, mc_count, seed);
    };
    validate(delta, a, b, grid_size, mc_count)?;
    let path: PathBuf = dir.join(BridgeNull::file_name(delta, a, b, grid_size, mc_count, seed));
    let header = BridgeNull::header(delta, a, b, grid_size, mc_count, seed);
    if let Ok(t) = persist::read(&path) {
        if header.iter().all(|(k, v)| t.header.get(*k) == Some(v)) && t.samples.len() == mc_count {
            return Ok(BridgeNull {
                delta,
                a,
                b,
                grid_size,
                samples: t.samples.into_iter().map(F::of).collect(),
                seed,
            });
        }
    }
    let null = simulate_bridge_null(delta, a, b, grid_size, mc_count, seed)?;
    let raw: Vec<f64> = null.samples.iter().map(|s| s.as_f64()).collect();
    persist::write(&path, &header, &raw)?;
    Ok(null)
}

/// Plug-in standard deviation: `sqrt(p(1-p))` for binary, `sqrt(lambda)` for
/// counts, with the rate estimated by `S_T / T`.
pub fn plugin_sigma<F: Real>(series: &ChannelSeries) -> F {
    let rate = F::of_u64(series.total()) / F::of_usize(series.len());
    match series.kind() {
        SeriesKind::Binary => (rate * (F::one() - rate)).sqrt(),
        SeriesKind::Count => rate.sqrt(),
    }
}

/// Asymptotic CUSUM test: `sqrt(T) * CUSUM / sigma_hat` against the bridge
/// null, scanning the same window the null was simulated on.
pub fn asymptotic_cusum_test<F: Real>(
    series: &ChannelSeries,
    delta: F,
    alpha: F,
    null: &BridgeNull<F>,
) -> Result<TestOutcome<F>> {
    check_alpha(alpha)?;
    if (delta - null.delta).abs() > F::of(1e-12) {
        return Err(Error::config(format!(
            "test exponent {delta} does not match bridge null exponent {}",
            null.delta
        )));
    }
    let cfg = CusumConfig::trimmed(delta, null.a, null.b);
    let raw = cusum_statistic(series, &cfg)?;
    let sigma = plugin_sigma::<F>(series);
    if sigma <= F::zero() {
        return Ok(TestOutcome::degenerate(F::zero(), alpha));
    }
    let z = F::of_usize(series.len()).sqrt() * raw.value / sigma;
    let p_value = null.pvalue(z);
    Ok(TestOutcome {
        statistic: z,
        p_value,
        reject: p_value <= alpha,
        alpha,
        changepoint_estimate: raw.argmax_t,
        calibration: CalibrationRef::Asymptotic {
            delta: delta.as_f64(),
            a: null.a.as_f64(),
            b: null.b.as_f64(),
            grid_size: null.grid_size,
            mc_count: null.mc_count(),
            seed: null.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Upper-`level` point of the Kolmogorov distribution, by bisection on
    /// its alternating series.
    fn kolmogorov_upper(level: f64) -> f64 {
        let tail = |x: f64| {
            2.0 * (1..100)
                .map(|k| {
                    let k = k as f64;
                    (if k as i64 % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * k * k * x * x).exp()
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

    #[test]
    fn kolmogorov_oracle_value() {
        assert!((kolmogorov_upper(0.1) - 1.2238).abs() < 1e-3);
    }

    #[test]
    fn validates_domain() {
        assert!(simulate_bridge_null(1.0f64, 0.5, 0.4, 1000, 1000, 1).is_err());
        assert!(simulate_bridge_null(1.0f64, 0.0, 0.4, 1000, 1000, 1).is_err());
        assert!(simulate_bridge_null(1.5f64, 0.1, 0.4, 1000, 1000, 1).is_err());
        assert!(simulate_bridge_null(1.0f64, 0.1, 0.4, 100, 1000, 1).is_err());
        assert!(simulate_bridge_null(1.0f64, 0.5001, 0.5009, 200, 1000, 1).is_err());
    }

    #[test]
    fn sup_bridge_matches_kolmogorov_quantile() {
        let n = 4000;
        let null = simulate_bridge_null(1.0f64, 1.0 / n as f64, 1.0 - 1.0 / n as f64, n, 20_000, 3).unwrap();
        let q = null.upper_quantile(0.1);
        assert!((q - kolmogorov_upper(0.1)).abs() < 0.02, "{q}");
        assert!(null.samples().iter().all(|&s| s >= 0.0));
        assert!(null.samples().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bridge_is_sign_symmetric() {
        let draws = simulate::<f64>(1.0, 500, 1, 499, 20_000, 8);
        let signed: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let mean = signed.iter().sum::<f64>() / signed.len() as f64;
        let sd = (signed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / signed.len() as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd / (signed.len() as f64).sqrt(), "{mean}");
        let mut abs: Vec<f64> = draws.iter().map(|d| d.0).collect();
        abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(abs[abs.len() / 2] > 0.0);
    }

    #[test]
    fn wider_window_dominates() {
        let narrow = simulate_bridge_null(0.5f64, 0.1, 0.9, 1000, 5000, 4).unwrap();
        let wide = simulate_bridge_null(0.5f64, 0.05, 0.95, 1000, 5000, 4).unwrap();
        for level in [0.5, 0.1, 0.05] {
            assert!(wide.upper_quantile(level) >= narrow.upper_quantile(level));
        }
    }

    #[test]
    fn grid_refinement_raises_and_settles_quantile() {
        let q = |n: usize| {
            simulate_bridge_null(1.0f64, 1.0 / 200.0, 199.0 / 200.0, n, 40_000, 6)
                .unwrap()
                .upper_quantile(0.1)
        };
        let (q200, q1000, q2000) = (q(200), q(1000), q(2000));
        assert!(q200 < q1000 && q200 < q2000, "{q200} {q1000} {q2000}");
        assert!((q2000 - q1000).abs() / q2000 < 0.01, "{q1000} {q2000}");
    }

    #[test]
    fn persisted_bridge_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let a = bridge_null_cached(Some(dir.path()), 0.5f64, 0.02, 0.98, 200, 1000, 2).unwrap();
        let b = bridge_null_cached(Some(dir.path()), 0.5f64, 0.02, 0.98, 200, 1000, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn degenerate_and_mismatch() {
        let null = simulate_bridge_null(1.0f64, 0.1, 0.9, 200, 1000, 1).unwrap();
        let s = ChannelSeries::binary(&[1; 10]).unwrap();
        let o = asymptotic_cusum_test(&s, 1.0, 0.1, &null).unwrap();
        assert!(!o.reject);
        assert_eq!(o.p_value, 1.0);
        let c = ChannelSeries::count(&[3; 10]).unwrap();
        assert!(!asymptotic_cusum_test(&c, 1.0, 0.1, &null).unwrap().reject);
        assert!(asymptotic_cusum_test(&c, 0.5, 0.1, &null).is_err());
    }

    #[test]
    fn detects_clear_change() {
        let (a, b) = default_window::<f64>(40);
        let null = simulate_bridge_null(1.0, a, b, 1000, 2000, 1).unwrap();
        let mut v = vec![0u64; 20];
        v.extend([1u64; 20]);
        let o = asymptotic_cusum_test(&ChannelSeries::binary(&v).unwrap(), 1.0, 0.05, &null).unwrap();
        assert!(o.reject);
        assert_eq!(o.changepoint_estimate, 20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn relabeling_binary_series_preserves_decision(v in proptest::collection::vec(0u64..=1, 10..40)) {
            let (a, b) = default_window::<f64>(v.len());
            let null = simulate_bridge_null(0.5, a, b, 400, 1000, 5).unwrap();
            let flipped: Vec<u64> = v.iter().map(|x| 1 - x).collect();
            let o1 = asymptotic_cusum_test(&ChannelSeries::binary(&v).unwrap(), 0.5, 0.1, &null).unwrap();
            let o2 = asymptotic_cusum_test(&ChannelSeries::binary(&flipped).unwrap(), 0.5, 0.1, &null).unwrap();
            prop_assert_eq!(o1.reject, o2.reject);
            prop_assert!((o1.statistic - o2.statistic).abs() <= 1e-12 * o1.statistic.max(1.0));
        }
    }
}
