// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation laboratory: synthetic multichannel scenarios, every global and
//! local method run on the same replicates, and power tables.
//!
//! # Scenario file format (version 1)
//!
//! Plain `key = value` lines; `#` starts a comment. Lists are comma
//! separated.
//!
//! ```text
//! version = 1
//! name = my_block
//! kind = binary            # binary | count
//! T = 50                   # series length
//! m = 200                  # channels
//! n_cp = 0, 5, 10          # one table row per entry
//! taus = 25                # changepoints, strictly increasing in 1..T-1
//! levels = 0.01, 0.30      # one Bernoulli probability or Poisson rate per segment
//! alpha = 0.1
//! replicates = 500
//! mc_count = 50000         # conditional null draws per calibration
//! permutations = 1000      # global permutation test
//! methods = all            # or e.g. gCU1, minP-BH, LR-STS
//! seed = 7
//! sts_lambda = 0.5
//! randomized = false       # tie-randomized global permutation p-values
//! baseline = first         # level of unchanged channels: first | last
//! ```
//!
//! Only `kind`, `T`, `m`, `taus` and `levels` are required. Changed channels
//! are channels `0..n_cp`; the others stay at the first level throughout, or
//! at the last level with `baseline = last`. Every cell is generated from its
//! own uniform draw by inversion, so a changed channel differs from its null
//! counterpart only through the segment levels.

use crate::error::{Error, Result};
use crate::exact::{CalibrationCache, ExactEngine, StatisticId, MIN_MC_COUNT};
use crate::multichannel::{
    channel_pvalues, evaluate_metrics, global_permutation_tests, ChannelMatrix, Metrics, PermutationOptions,
    ReplicateDecision, TruthSpec, MIN_PERMUTATIONS,
};
use crate::multitest::{FdrMethod, PValueSet, DEFAULT_STS_LAMBDA};
use crate::seed::{derive, hash_label, rng_from};
use crate::series::SeriesKind;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_REPLICATES: usize = 500;

const MAX_RATE: f64 = 500.0;

/// A global or local testing method as named in the power tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Global CUSUM permutation test with exponent `delta`.
    Global { delta: f64 },
    /// Per-channel exact test combined with an FDR procedure.
    Local { stat: StatisticId, fdr: FdrMethod },
}

fn delta_suffix(d: f64) -> String {
    let s = format!("{d}");
    match s.strip_prefix('0') {
        Some(rest) if rest.starts_with('.') => rest.to_string(),
        _ => s,
    }
}

fn parse_delta(s: &str) -> Option<f64> {
    let d: f64 = if s.starts_with('.') {
        format!("0{s}").parse().ok()?
    } else {
        s.parse().ok()?
    };
    (0.0..=1.0).contains(&d).then_some(d)
}

impl Method {
    /// The eleven columns of the power tables, in table order.
    pub fn table_columns() -> Vec<Method> {
        let mut out = vec![Method::Global { delta: 0.5 }, Method::Global { delta: 1.0 }];
        for fdr in [FdrMethod::Bh, FdrMethod::Abh, FdrMethod::sts()] {
            for stat in [StatisticId::MinP, StatisticId::Lr, StatisticId::Cusum { delta: 1.0 }] {
                out.push(Method::Local { stat, fdr });
            }
        }
        out
    }

    pub fn name(&self) -> String {
        match self {
            Method::Global { delta } => format!("gCU{}", delta_suffix(*delta)),
            Method::Local { stat, fdr } => {
                let test = match stat {
                    StatisticId::MinP => "minP".to_string(),
                    StatisticId::Lr => "LR".to_string(),
                    StatisticId::Cusum { delta } => format!("CU{}", delta_suffix(*delta)),
                };
                format!("{test}-{}", fdr.name())
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::config(format!("unknown method `{t}`"));
        let lower = t.to_ascii_lowercase();
        if let Some(d) = lower.strip_prefix("gcu") {
            return parse_delta(d).map(|delta| Method::Global { delta }).ok_or_else(bad);
        }
        let (test, fdr) = lower.split_once('-').ok_or_else(bad)?;
        let stat = match test {
            "minp" => StatisticId::MinP,
            "lr" => StatisticId::Lr,
            _ => {
                let d = test.strip_prefix("cu").and_then(parse_delta).ok_or_else(bad)?;
                StatisticId::Cusum { delta: d }
            }
        };
        Ok(Method::Local {
            stat,
            fdr: fdr.parse()?,
        })
    }
}

/// Level at which unchanged channels are generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    First,
    Last,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::First => "first",
            Baseline::Last => "last",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first" => Ok(Baseline::First),
            "last" => Ok(Baseline::Last),
            other => Err(Error::config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// One simulation block: a data-generating setting and the methods to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: SeriesKind,
    /// Series length `T`.
    pub len: usize,
    /// Number of channels `m`.
    pub channels: usize,
    /// Numbers of changed channels; each entry is one table row.
    pub n_cp: Vec<usize>,
    pub taus: Vec<usize>,
    pub levels: Vec<f64>,
    pub alpha: f64,
    pub replicates: usize,
    pub mc_count: usize,
    pub permutations: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub sts_lambda: f64,
    pub randomized: bool,
    pub baseline: Baseline,
}

fn field_err(key: &str, msg: impl fmt::Display) -> Error {
    Error::config(format!("field `{key}`: {msg}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| field_err(key, format!("cannot parse `{s}`"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| field_err(key, format!("cannot parse `{v}`")))
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ScenarioConfig {
    /// Single-changepoint scenario with default settings and all table
    /// methods.
    pub fn single(kind: SeriesKind, len: usize, channels: usize, tau: usize, levels: (f64, f64)) -> Self {
        Self {
            name: "scenario".into(),
            kind,
            len,
            channels,
            n_cp: vec![0],
            taus: vec![tau],
            levels: vec![levels.0, levels.1],
            alpha: 0.1,
            replicates: DEFAULT_REPLICATES,
            mc_count: crate::exact::DEFAULT_MC_COUNT,
            permutations: crate::multichannel::DEFAULT_PERMUTATIONS,
            methods: Method::table_columns(),
            seed: 1,
            sts_lambda: DEFAULT_STS_LAMBDA,
            randomized: false,
            baseline: Baseline::First,
        }
    }

    /// Checks every field; the message names the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(field_err("T", "must be at least 2"));
        }
        if self.channels == 0 {
            return Err(field_err("m", "must be positive"));
        }
        if self.n_cp.is_empty() {
            return Err(field_err("n_cp", "empty list"));
        }
        if let Some(n) = self.n_cp.iter().find(|&&n| n > self.channels) {
            return Err(field_err("n_cp", format!("{n} exceeds m = {}", self.channels)));
        }
        if self.taus.is_empty() {
            return Err(field_err("taus", "empty list"));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_err("taus", "must be strictly increasing"));
        }
        if self.taus[0] < 1 || *self.taus.last().unwrap() > self.len - 1 {
            return Err(field_err("taus", format!("must lie in 1..={}", self.len - 1)));
        }
        if self.levels.len() != self.taus.len() + 1 {
            return Err(field_err(
                "levels",
                format!("{} levels for {} segments", self.levels.len(), self.taus.len() + 1),
            ));
        }
        let range = match self.kind {
            SeriesKind::Binary => 0.0..=1.0,
            SeriesKind::Count => 0.0..=MAX_RATE,
        };
        if let Some(l) = self.levels.iter().find(|l| !range.contains(l)) {
            return Err(field_err("levels", format!("{l} outside {range:?}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field_err("alpha", "must lie in (0, 1)"));
        }
        if self.replicates == 0 {
            return Err(field_err("replicates", "must be positive"));
        }
        if self.methods.is_empty() {
            return Err(field_err("methods", "empty list"));
        }
        let has_local = self.methods.iter().any(|m| matches!(m, Method::Local { .. }));
        let has_global = self.methods.iter().any(|m| matches!(m, Method::Global { .. }));
        if has_local && self.mc_count < MIN_MC_COUNT {
            return Err(field_err("mc_count", format!("at least {MIN_MC_COUNT} required")));
        }
        if has_global && self.permutations < MIN_PERMUTATIONS {
            return Err(field_err(
                "permutations",
                format!("at least {MIN_PERMUTATIONS} required"),
            ));
        }
        if !(self.sts_lambda > 0.0 && self.sts_lambda < 1.0) {
            return Err(field_err("sts_lambda", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Renders the configuration in the scenario file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {SCENARIO_FORMAT_VERSION}");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "kind = {}", self.kind.as_str());
        let _ = writeln!(s, "T = {}", self.len);
        let _ = writeln!(s, "m = {}", self.channels);
        let _ = writeln!(s, "n_cp = {}", join(&self.n_cp));
        let _ = writeln!(s, "taus = {}", join(&self.taus));
        let _ = writeln!(s, "levels = {}", join(&self.levels));
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "mc_count = {}", self.mc_count);
        let _ = writeln!(s, "permutations = {}", self.permutations);
        let _ = writeln!(s, "methods = {}", join(&self.methods));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sts_lambda = {}", self.sts_lambda);
        let _ = writeln!(s, "randomized = {}", self.randomized);
        let _ = writeln!(s, "baseline = {}", self.baseline.as_str());
        s
    }

    /// The truth for one table row.
    pub fn truth(&self, n_cp: usize) -> TruthSpec {
        TruthSpec {
            changed_channels: (0..n_cp).collect(),
            taus: self.taus.clone(),
        }
    }

    /// Synthesizes the channel matrix for a row and replicate.
    pub fn synthesize(&self, n_cp: usize, replicate: usize) -> Result<ChannelMatrix> {
        let seed = replicate_seed(self.seed, n_cp, replicate);
        let null_level = match self.baseline {
            Baseline::First => self.levels[0],
            Baseline::Last => *self.levels.last().expect("validated"),
        };
        let rows = (0..self.channels)
            .map(|j| {
                let mut rng = rng_from(seed, &[j as u64]);
                let mut segment = 0;
                (1..=self.len)
                    .map(|t| {
                        if j < n_cp && segment < self.taus.len() && t > self.taus[segment] {
                            segment += 1;
                        }
                        let level = if j < n_cp { self.levels[segment] } else { null_level };
                        draw(self.kind, level, rng.random::<f64>())
                    })
                    .collect()
            })
            .collect();
        ChannelMatrix::unlabeled(self.kind, rows)
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::single(SeriesKind::Binary, 2, 1, 1, (0.0, 0.0));
        cfg.name = "scenario".into();
        let mut seen = BTreeSet::new();
        let mut method_names = None;
        for (r, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(r + 1, 1, "expected `key = value`"))?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(r + 1, 1, format!("field `{key}` given twice")));
            }
            match key {
                "version" => {
                    let ver: u32 = parse_one(key, v)?;
                    if ver != SCENARIO_FORMAT_VERSION {
                        return Err(field_err(key, format!("unsupported version {ver}")));
                    }
                }
                "name" => cfg.name = v.to_string(),
                "kind" => cfg.kind = v.parse().map_err(|_| field_err(key, format!("unknown kind `{v}`")))?,
                "T" => cfg.len = parse_one(key, v)?,
                "m" => cfg.channels = parse_one(key, v)?,
                "n_cp" => cfg.n_cp = parse_list(key, v)?,
                "taus" => cfg.taus = parse_list(key, v)?,
                "levels" => cfg.levels = parse_list(key, v)?,
                "alpha" => cfg.alpha = parse_one(key, v)?,
                "replicates" => cfg.replicates = parse_one(key, v)?,
                "mc_count" => cfg.mc_count = parse_one(key, v)?,
                "permutations" => cfg.permutations = parse_one(key, v)?,
                "methods" => method_names = Some(v.to_string()),
                "seed" => cfg.seed = parse_one(key, v)?,
                "sts_lambda" => cfg.sts_lambda = parse_one(key, v)?,
                "randomized" => cfg.randomized = parse_one(key, v)?,
                "baseline" => cfg.baseline = v.parse().map_err(|e: Error| field_err(key, e))?,
                other => return Err(Error::parse(r + 1, 1, format!("unknown field `{other}`"))),
            }
        }
        for required in ["kind", "T", "m", "taus", "levels"] {
            if !seen.contains(required) {
                return Err(field_err(required, "missing"));
            }
        }
        if let Some(names) = method_names {
            cfg.methods = if names.eq_ignore_ascii_case("all") {
                Method::table_columns()
            } else {
                names
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e: Error| field_err("methods", e)))
                    .collect::<Result<_>>()?
            };
        }
        for m in &mut cfg.methods {
            if let Method::Local {
                fdr: FdrMethod::Sts { lambda },
                ..
            } = m
            {
                *lambda = cfg.sts_lambda;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn replicate_seed(seed: u64, n_cp: usize, replicate: usize) -> u64 {
    derive(seed, &[hash_label("replicate"), n_cp as u64, replicate as u64])
}

/// Bernoulli or Poisson draw by inversion of a single uniform.
fn draw(kind: SeriesKind, level: f64, u: f64) -> u64 {
    match kind {
        SeriesKind::Binary => u64::from(u < level),
        SeriesKind::Count => {
            let mut k = 0u64;
            let mut pk = (-level).exp();
            let mut cdf = pk;
            while u >= cdf && pk > 0.0 {
                k += 1;
                pk *= level / k as f64;
                cdf += pk;
            }
            if pk == 0.0 && u >= cdf {
                // rounding left the cumulative sum just short of u
                k = k.max(level.ceil() as u64);
            }
            k
        }
    }
}

/// Metrics of every method for one value of `n_cp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n_cp: usize,
    pub metrics: Vec<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub scenario: ScenarioConfig,
    pub methods: Vec<String>,
    pub rows: Vec<PowerRow>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PowerReport {
    pub fn metrics(&self, n_cp: usize, method: &str) -> Option<&Metrics> {
        let k = self.methods.iter().position(|m| m == method)?;
        self.rows.iter().find(|r| r.n_cp == n_cp).map(|r| &r.metrics[k])
    }

    fn table(&self, pick: impl Fn(Rate, &Metrics) -> f64) -> String {
        let mut out = String::from("n_cp\tmetric");
        for m in &self.methods {
            let _ = write!(out, "\t{m}");
        }
        out.push('\n');
        let global: Vec<bool> = self
            .scenario
            .methods
            .iter()
            .map(|m| matches!(m, Method::Global { .. }))
            .collect();
        for row in &self.rows {
            for rate in [Rate::PGcd, Rate::Tpr, Rate::Fdr] {
                if rate != Rate::PGcd && row.n_cp == 0 {
                    continue;
                }
                let _ = write!(out, "{}\t{}", row.n_cp, rate.label());
                for (m, &g) in row.metrics.iter().zip(&global) {
                    if rate != Rate::PGcd && g {
                        out.push('\t');
                    } else {
                        let _ = write!(out, "\t{:.4}", pick(rate, m));
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Tab-separated rates: one column per method, rows `P(gCD)`, `TPR`,
    /// `FDR` per `n_cp` (TPR and FDR omitted for global methods and for
    /// `n_cp = 0`).
    pub fn to_tsv(&self) -> String {
        self.table(|rate, m| match rate {
            Rate::PGcd => m.p_gcd,
            Rate::Tpr => m.tpr,
            Rate::Fdr => m.fdr,
        })
    }

    /// Standard errors in the layout of [`PowerReport::to_tsv`].
    pub fn se_tsv(&self) -> String {
        self.table(|rate, m| match rate {
            Rate::PGcd => m.se_p_gcd,
            Rate::Tpr => m.se_tpr,
            Rate::Fdr => m.se_fdr,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rate {
    PGcd,
    Tpr,
    Fdr,
}

impl Rate {
    fn label(self) -> &'static str {
        match self {
            Rate::PGcd => "P(gCD)",
            Rate::Tpr => "TPR",
            Rate::Fdr => "FDR",
        }
    }
}

/// Runs a scenario with an in-memory calibration cache.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<PowerReport> {
    run_scenario_with(cfg, Arc::new(CalibrationCache::new()))
}

/// Runs a scenario reusing (and filling) `cache`. Calibrations depend only
/// on the scenario seed, so one cache serves every row and replicate.
pub fn run_scenario_with(cfg: &ScenarioConfig, cache: Arc<CalibrationCache<f64>>) -> Result<PowerReport> {
    cfg.validate()?;
    let start = Instant::now();
    let engine = ExactEngine::with_cache(
        cache,
        cfg.mc_count.max(MIN_MC_COUNT),
        derive(cfg.seed, &[hash_label("calibration")]),
    )?;
    let mut stats: Vec<StatisticId> = Vec::new();
    let mut deltas: Vec<f64> = Vec::new();
    for m in &cfg.methods {
        match *m {
            Method::Local { stat, .. } if !stats.contains(&stat) => stats.push(stat),
            Method::Global { delta } if !deltas.contains(&delta) => deltas.push(delta),
            _ => {}
        }
    }
    let mut rows = Vec::with_capacity(cfg.n_cp.len());
    for &n_cp in &cfg.n_cp {
        let decisions: Vec<Vec<ReplicateDecision>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| replicate(cfg, &engine, &stats, &deltas, n_cp, r))
            .collect::<Result<_>>()?;
        let truth = cfg.truth(n_cp);
        let metrics = (0..cfg.methods.len())
            .map(|k| {
                let column: Vec<ReplicateDecision> = decisions.iter().map(|d| d[k].clone()).collect();
                evaluate_metrics(&column, &truth)
            })
            .collect();
        rows.push(PowerRow { n_cp, metrics });
    }
    Ok(PowerReport {
        scenario: cfg.clone(),
        methods: cfg.methods.iter().map(Method::name).collect(),
        rows,
        wall_time: start.elapsed(),
    })
}

fn replicate(
    cfg: &ScenarioConfig,
    engine: &ExactEngine<f64>,
    stats: &[StatisticId],
    deltas: &[f64],
    n_cp: usize,
    r: usize,
) -> Result<Vec<ReplicateDecision>> {
    let matrix = cfg.synthesize(n_cp, r)?;
    let mut pvalues = Vec::with_capacity(stats.len());
    for &stat in stats {
        let (p, _) = channel_pvalues(engine, &matrix, stat)?;
        pvalues.push(PValueSet::unlabeled(p)?);
    }
    let globals = if deltas.is_empty() {
        Vec::new()
    } else {
        let opts = PermutationOptions {
            permutations: cfg.permutations,
            seed: derive(replicate_seed(cfg.seed, n_cp, r), &[hash_label("permutation")]),
            randomized: cfg.randomized,
        };
        global_permutation_tests(&matrix, deltas, cfg.alpha, opts)?
    };
    cfg.methods
        .iter()
        .map(|m| match *m {
            Method::Global { delta } => {
                let k = deltas.iter().position(|&d| d == delta).expect("collected above");
                Ok(ReplicateDecision::from(&globals[k]))
            }
            Method::Local { stat, fdr } => {
                let k = stats.iter().position(|&s| s == stat).expect("collected above");
                Ok(ReplicateDecision::from(&fdr.apply(&pvalues[k], cfg.alpha)?))
            }
        })
        .collect()
}

const BUNDLED: &[(&str, &str)] = &[
    ("table1_block1", include_str!("../scenarios/table1_block1.cfg")),
    ("table1_block2", include_str!("../scenarios/table1_block2.cfg")),
    ("table1_block3", include_str!("../scenarios/table1_block3.cfg")),
    ("table2_block1", include_str!("../scenarios/table2_block1.cfg")),
    ("table2_block2", include_str!("../scenarios/table2_block2.cfg")),
    ("table2_block3", include_str!("../scenarios/table2_block3.cfg")),
    ("table3_block1", include_str!("../scenarios/table3_block1.cfg")),
    ("table3_block2", include_str!("../scenarios/table3_block2.cfg")),
    ("table4_block1", include_str!("../scenarios/table4_block1.cfg")),
    ("table4_block2", include_str!("../scenarios/table4_block2.cfg")),
    ("table5_block1", include_str!("../scenarios/table5_block1.cfg")),
    ("table5_block2", include_str!("../scenarios/table5_block2.cfg")),
    ("table5_block3", include_str!("../scenarios/table5_block3.cfg")),
    ("table6_block1", include_str!("../scenarios/table6_block1.cfg")),
    ("table6_block2", include_str!("../scenarios/table6_block2.cfg")),
    ("table6_block3", include_str!("../scenarios/table6_block3.cfg")),
    ("table7_block1", include_str!("../scenarios/table7_block1.cfg")),
    ("table7_block2", include_str!("../scenarios/table7_block2.cfg")),
    ("table8_block1", include_str!("../scenarios/table8_block1.cfg")),
    ("table8_block2", include_str!("../scenarios/table8_block2.cfg")),
];

/// Names of the bundled scenario blocks.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Raw text of a bundled scenario.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// A bundled scenario, parsed.
pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    bundled_text(name).map(|t| t.parse().expect("bundled scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SeriesKind) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::single(kind, 12, 6, 6, (0.2, 0.8));
        cfg.n_cp = vec![0, 2];
        cfg.replicates = 4;
        cfg.mc_count = 1000;
        cfg.permutations = 99;
        cfg
    }

    #[test]
    fn method_names_round_trip() {
        let names: Vec<String> = Method::table_columns().iter().map(Method::name).collect();
        assert_eq!(
            names,
            [
                "gCU.5", "gCU1", "minP-BH", "LR-BH", "CU1-BH", "minP-ABH", "LR-ABH", "CU1-ABH", "minP-STS", "LR-STS",
                "CU1-STS"
            ]
        );
        for m in Method::table_columns() {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("gcu0.5".parse::<Method>().unwrap(), Method::Global { delta: 0.5 });
        assert!("CU2-BH".parse::<Method>().is_err());
        assert!("minP-XYZ".parse::<Method>().is_err());
    }

    #[test]
    fn bundled_configs_parse_and_round_trip() {
        assert_eq!(bundled_names().count(), 20);
        for name in bundled_names() {
            let cfg = bundled(name).unwrap();
            assert_eq!(cfg.name, name);
            assert_eq!(cfg.to_text().parse::<ScenarioConfig>().unwrap(), cfg);
        }
        let t1 = bundled("table1_block1").unwrap();
        assert_eq!((t1.len, t1.channels, t1.taus.clone()), (50, 200, vec![25]));
        assert_eq!(t1.methods.len(), 11);
        let t4 = bundled("table4_block2").unwrap();
        assert_eq!(t4.taus, vec![50, 100, 150]);
        assert_eq!(t4.levels, vec![0.01, 0.2, 0.1, 0.3]);
    }

    #[test]
    fn config_errors_name_the_field() {
        let base = "kind = binary\nT = 20\nm = 5\ntaus = 10\nlevels = 0.1, 0.5\n";
        assert!(base.parse::<ScenarioConfig>().is_ok());
        let cases = [
            ("n_cp = 6\n", "n_cp"),
            ("alpha = 1.5\n", "alpha"),
            ("methods = foo\n", "methods"),
            ("version = 2\n", "version"),
            ("mc_count = 10\n", "mc_count"),
        ];
        for (extra, field) in cases {
            let err = format!("{base}{extra}")
                .parse::<ScenarioConfig>()
                .unwrap_err()
                .to_string();
            assert!(err.contains(field), "{err}");
        }
        let err = "kind = binary\nT = 20\nm = 5\ntaus = 10, 5\nlevels = 0.1, 0.5, 0.2\n"
            .parse::<ScenarioConfig>()
            .unwrap_err()
            .to_string();
        assert!(err.contains("taus"), "{err}");
        let err = "kind = binary\nT = 20\nm = 5\ntaus = 10\nlevels = 0.1\n"
            .parse::<ScenarioConfig>()
            .unwrap_err()
            .to_string();
        assert!(err.contains("levels"), "{err}");
        assert!("kind = binary\nT = 20\n".parse::<ScenarioConfig>().is_err());
        assert!(format!("{base}bogus = 1\n").parse::<ScenarioConfig>().is_err());
    }

    #[test]
    fn synthesis_honours_truth() {
        for kind in [SeriesKind::Binary, SeriesKind::Count] {
            let mut cfg = small(kind);
            cfg.levels = vec![0.4, 0.4];
            let flat = cfg.synthesize(3, 0).unwrap();
            assert_eq!(flat, cfg.synthesize(3, 0).unwrap());
            cfg.levels = vec![0.4, 0.9];
            let changed = cfg.synthesize(3, 0).unwrap();
            for j in 0..cfg.channels {
                for t in 0..cfg.len {
                    if j >= 3 || t < cfg.taus[0] {
                        assert_eq!(changed.row(j)[t], flat.row(j)[t]);
                    } else {
                        assert!(changed.row(j)[t] >= flat.row(j)[t]);
                    }
                }
            }
        }
    }

    #[test]
    fn baseline_sets_null_level() {
        let mut cfg = small(SeriesKind::Binary);
        cfg.levels = vec![0.0, 1.0];
        let first = cfg.synthesize(2, 0).unwrap();
        cfg.baseline = Baseline::Last;
        let last = cfg.synthesize(2, 0).unwrap();
        for j in 0..cfg.channels {
            let changed = j < 2;
            for t in 0..cfg.len {
                let after = t >= cfg.taus[0];
                assert_eq!(first.row(j)[t], u64::from(changed && after));
                assert_eq!(last.row(j)[t], u64::from(!changed || after));
            }
        }
    }

    #[test]
    fn poisson_inversion_matches_moments() {
        let mut rng = rng_from(3, &[]);
        for lambda in [0.15, 1.0, 3.5, 40.0] {
            let n = 40_000;
            let xs: Vec<f64> = (0..n)
                .map(|_| draw(SeriesKind::Count, lambda, rng.random()) as f64)
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(
                (mean - lambda).abs() < 4.5 * (lambda / n as f64).sqrt(),
                "{lambda}: {mean}"
            );
            assert!((var / lambda - 1.0).abs() < 0.1, "{lambda}: {var}");
        }
    }

    #[test]
    fn small_run_is_deterministic_and_well_formed() {
        let cfg = small(SeriesKind::Binary);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_eq!(a.se_tsv(), b.se_tsv());
        assert_eq!(a.rows.len(), 2);
        for row in &a.rows {
            for m in &row.metrics {
                for r in [m.p_gcd, m.tpr, m.fdr] {
                    assert!((0.0..=1.0).contains(&r));
                }
            }
        }
        let tsv = a.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + 3);
        assert!(lines[0].starts_with("n_cp\tmetric\tgCU.5\tgCU1\tminP-BH"));
        assert!(lines[2].starts_with("2\tP(gCD)\t"));
        assert!(lines[3].starts_with("2\tTPR\t\t\t"));
    }

    #[test]
    fn single_replicate_rates_are_binary() {
        let mut cfg = small(SeriesKind::Count);
        cfg.replicates = 1;
        let rep = run_scenario(&cfg).unwrap();
        for row in &rep.rows {
            for m in &row.metrics {
                assert!(m.p_gcd == 0.0 || m.p_gcd == 1.0);
            }
        }
    }
}
