// SPDX-License-Identifier: MIT OR Apache-2.0

//! `exactcp` command-line tool.
//!
//! Every subcommand prints one JSON record on stdout and a human-readable
//! summary on stderr. Exact calibrations and bridge tables are kept on disk
//! when `EXACTCP_CACHE_DIR` is set.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exactcp::asymptotic::{self, DEFAULT_BRIDGE_MC, DEFAULT_GRID_SIZE};
use exactcp::exact::DEFAULT_MC_COUNT;
use exactcp::ingest::{self, ChannelFilter, EdgeMode};
use exactcp::multichannel::local_test_with;
use exactcp::simlab::{self, run_scenario_with, ScenarioConfig};
use exactcp::{CalibrationCache, ChannelMatrix, ExactEngine, FdrMethod, SeriesKind, StatisticId};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

const CACHE_ENV: &str = "EXACTCP_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "exactcp",
    version,
    about = "Exact changepoint tests for binary and count series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a single series for a changepoint.
    Detect(DetectArgs),
    /// Local test of every channel in a matrix with FDR control.
    Multi(MultiArgs),
    /// Build edge or degree channels from network snapshots and test them.
    Network(NetworkArgs),
    /// Run a simulation scenario and write its power tables.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Binary,
    Count,
}

impl From<KindArg> for SeriesKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Binary => SeriesKind::Binary,
            KindArg::Count => SeriesKind::Count,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectMethod {
    Minp,
    Lr,
    Cu05,
    Cu1,
    Bb05,
    Bb1,
}

#[derive(Clone, Copy, ValueEnum)]
enum LocalTest {
    Minp,
    Lr,
    Cu1,
}

impl From<LocalTest> for StatisticId {
    fn from(t: LocalTest) -> Self {
        match t {
            LocalTest::Minp => StatisticId::MinP,
            LocalTest::Lr => StatisticId::Lr,
            LocalTest::Cu1 => StatisticId::Cusum { delta: 1.0 },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FdrArg {
    Bh,
    Abh,
    Sts,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelsArg {
    Edges,
    Degrees,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Binary,
    Weighted,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, value_enum)]
    method: DetectMethod,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Monte Carlo draws for exact calibration, or bridge paths for bb05/bb1.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grid size of the simulated Brownian bridge (bb05/bb1).
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
}

#[derive(Args)]
struct LocalArgs {
    #[arg(long, value_enum, default_value = "cu1")]
    test: LocalTest,
    #[arg(long, value_enum, default_value = "bh")]
    fdr: FdrArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Drop channels with more than this many zeros (binary: or ones).
    #[arg(long)]
    filter: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MC_COUNT)]
    mc: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// STS tuning parameter.
    #[arg(long, default_value_t = exactcp::multitest::DEFAULT_STS_LAMBDA)]
    lambda: f64,
    /// Directory for `channels.tsv`, `histogram.tsv` and `dropped.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MultiArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    local: LocalArgs,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    channels: ChannelsArg,
    /// Edge channel values; degree channels are always weighted counts.
    #[arg(long, value_enum, default_value = "binary")]
    mode: ModeArg,
    #[command(flatten)]
    local: LocalArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file.
    #[arg(long, conflicts_with_all = ["bundled", "list"], required_unless_present_any = ["bundled", "list"])]
    config: Option<PathBuf>,
    /// Name of a bundled scenario such as `table1_block1`.
    #[arg(long, conflicts_with = "list")]
    bundled: Option<String>,
    /// List bundled scenarios and exit.
    #[arg(long)]
    list: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn calibration_cache() -> Result<Arc<CalibrationCache<f64>>> {
    Ok(Arc::new(match cache_dir() {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
            CalibrationCache::persistent(dir)
        }
        None => CalibrationCache::new(),
    }))
}

fn emit(record: &Value) {
    println!("{record}");
}

fn detect(args: DetectArgs) -> Result<()> {
    let kind = SeriesKind::from(args.kind);
    let series = ingest::load_series(&args.input, kind).with_context(|| format!("reading {}", args.input.display()))?;
    let (name, outcome) = match args.method {
        DetectMethod::Bb05 | DetectMethod::Bb1 => {
            let delta = if matches!(args.method, DetectMethod::Bb05) {
                0.5
            } else {
                1.0
            };
            let (a, b) = asymptotic::default_window::<f64>(series.len());
            let null = asymptotic::bridge_null_cached(
                cache_dir().as_deref(),
                delta,
                a,
                b,
                args.grid,
                args.mc.unwrap_or(DEFAULT_BRIDGE_MC),
                args.seed,
            )?;
            let name = if delta == 0.5 { "bb05" } else { "bb1" };
            (
                name,
                asymptotic::asymptotic_cusum_test(&series, delta, args.alpha, &null)?,
            )
        }
        m => {
            let (name, stat) = match m {
                DetectMethod::Minp => ("minp", StatisticId::MinP),
                DetectMethod::Lr => ("lr", StatisticId::Lr),
                DetectMethod::Cu05 => ("cu05", StatisticId::Cusum { delta: 0.5 }),
                _ => ("cu1", StatisticId::Cusum { delta: 1.0 }),
            };
            let engine = ExactEngine::with_cache(calibration_cache()?, args.mc.unwrap_or(DEFAULT_MC_COUNT), args.seed)?;
            (name, engine.test(&series, stat, args.alpha)?)
        }
    };
    emit(&json!({
        "command": "detect",
        "method": name,
        "kind": kind.as_str(),
        "T": series.len(),
        "total": series.total(),
        "statistic": outcome.statistic,
        "p_value": outcome.p_value,
        "reject": outcome.reject,
        "alpha": outcome.alpha,
        "changepoint_estimate": outcome.changepoint_estimate,
        "calibration": outcome.calibration,
        "seed": args.seed,
    }));
    eprintln!(
        "{name}: T = {}, S = {}, statistic = {:.6}, p = {:.6} -> {} at alpha = {} (estimated changepoint {})",
        series.len(),
        series.total(),
        outcome.statistic,
        outcome.p_value,
        if outcome.reject {
            "change detected"
        } else {
            "no change detected"
        },
        args.alpha,
        outcome.changepoint_estimate
    );
    Ok(())
}

fn fdr_method(arg: FdrArg, lambda: f64) -> FdrMethod {
    match arg {
        FdrArg::Bh => FdrMethod::Bh,
        FdrArg::Abh => FdrMethod::Abh,
        FdrArg::Sts => FdrMethod::Sts { lambda },
    }
}

/// Filters, tests and reports a channel matrix.
fn run_local(command: &str, matrix: ChannelMatrix, args: &LocalArgs, extra: Value) -> Result<()> {
    let before = matrix.channels();
    let filter = ChannelFilter {
        max_constant: args.filter.unwrap_or(matrix.len()),
    };
    let (matrix, dropped) = ingest::filter_channels(&matrix, filter)?;
    let stat = StatisticId::from(args.test);
    let fdr = fdr_method(args.fdr, args.lambda);

    let mut rows = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut global_reject = false;
    let mut note = None;
    if matrix.channels() == 0 {
        note = Some("every channel was removed by the filter; nothing to test".to_string());
    } else {
        let engine = ExactEngine::with_cache(calibration_cache()?, args.mc, args.seed)?;
        let result = local_test_with(&engine, &matrix, stat, fdr, args.alpha)?;
        global_reject = result.global_reject;
        for (j, id) in matrix.channel_ids().iter().enumerate() {
            let rejected = result.rejections.contains(j);
            if rejected {
                *histogram.entry(result.estimates[j]).or_insert(0usize) += 1;
            }
            rows.push((id.clone(), result.pvals.pvalues()[j], rejected, result.estimates[j]));
        }
    }

    if let Some(dir) = &args.out {
        write_local_reports(dir, &rows, &histogram, &dropped)?;
    }

    let mut record = json!({
        "command": command,
        "test": stat.label(),
        "fdr": fdr.name(),
        "alpha": args.alpha,
        "T": matrix.len(),
        "channels_before_filter": before,
        "channels_tested": matrix.channels(),
        "filter_max_constant": filter.max_constant,
        "dropped": dropped,
        "global_reject": global_reject,
        "rejected": rows.iter().filter(|r| r.2).map(|r| &r.0).collect::<Vec<_>>(),
        "channels": rows.iter().map(|(id, p, rej, est)| json!({
            "id": id,
            "p_value": p,
            "rejected": rej,
            "changepoint": if *rej { Some(est) } else { None },
        })).collect::<Vec<_>>(),
        "histogram": histogram.iter().map(|(loc, n)| json!([loc, n])).collect::<Vec<_>>(),
        "mc_count": args.mc,
        "seed": args.seed,
        "note": note,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut record, extra) {
        map.extend(more);
    }
    emit(&record);

    let mut summary = format!(
        "{command}: {} of {before} channels tested ({} dropped by the filter), {} rejected by {}-{}",
        matrix.channels(),
        dropped.len(),
        rows.iter().filter(|r| r.2).count(),
        stat.label(),
        fdr.name()
    );
    if let Some(n) = &note {
        let _ = write!(summary, "\n{n}");
    }
    if !histogram.is_empty() {
        summary.push_str("\nestimated changepoint locations (location: channels):");
        for (loc, n) in &histogram {
            let _ = write!(summary, "\n  {loc:>5}: {n}");
        }
    }
    eprintln!("{summary}");
    Ok(())
}

fn write_local_reports(
    dir: &Path,
    rows: &[(String, f64, bool, usize)],
    histogram: &BTreeMap<usize, usize>,
    dropped: &[String],
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut channels = String::from("id\tp_value\trejected\tchangepoint\n");
    for (id, p, rej, est) in rows {
        let est = if *rej { est.to_string() } else { String::new() };
        let _ = writeln!(channels, "{id}\t{p}\t{rej}\t{est}");
    }
    let mut hist = String::from("location\tchannels\n");
    for (loc, n) in histogram {
        let _ = writeln!(hist, "{loc}\t{n}");
    }
    let mut drop = String::new();
    for id in dropped {
        let _ = writeln!(drop, "{id}");
    }
    std::fs::write(dir.join("channels.tsv"), channels)?;
    std::fs::write(dir.join("histogram.tsv"), hist)?;
    std::fs::write(dir.join("dropped.txt"), drop)?;
    Ok(())
}

fn multi(args: MultiArgs) -> Result<()> {
    let matrix = ingest::load_channel_matrix(&args.input, args.kind.into())
        .with_context(|| format!("reading {}", args.input.display()))?;
    run_local("multi", matrix, &args.local, json!({}))
}

fn network(args: NetworkArgs) -> Result<()> {
    let series = ingest::load_network(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let (matrix, label) = match args.channels {
        ChannelsArg::Edges => {
            let mode = match args.mode {
                ModeArg::Binary => EdgeMode::Binary,
                ModeArg::Weighted => EdgeMode::Weighted,
            };
            (ingest::edge_channels(&series, mode)?, "edges")
        }
        ChannelsArg::Degrees => (ingest::degree_channels(&series)?, "degrees"),
    };
    if series.epochs() < 2 {
        bail!("network series needs at least 2 epochs");
    }
    let mut local = args.local;
    local.filter = Some(
        local
            .filter
            .unwrap_or(ChannelFilter::lenient(series.epochs()).max_constant),
    );
    run_local(
        "network",
        matrix,
        &local,
        json!({ "nodes": series.nodes(), "epochs": series.epochs(), "channel_type": label }),
    )
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if args.list {
        for name in simlab::bundled_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg: ScenarioConfig = match (&args.config, &args.bundled) {
        (Some(path), _) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .parse()
            .with_context(|| format!("invalid scenario {}", path.display()))?,
        (None, Some(name)) => match simlab::bundled(name) {
            Some(cfg) => cfg,
            None => bail!("no bundled scenario `{name}` (see `simulate --list`)"),
        },
        (None, None) => bail!("one of --config, --bundled or --list is required"),
    };
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(mc) = args.mc {
        cfg.mc_count = mc;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().context("invalid scenario")?;

    let started = Instant::now();
    let report = run_scenario_with(&cfg, calibration_cache()?)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let table = args.out.join(format!("{}.tsv", cfg.name));
    let se = args.out.join(format!("{}.se.tsv", cfg.name));
    std::fs::write(&table, report.to_tsv())?;
    std::fs::write(&se, report.se_tsv())?;
    emit(&json!({
        "command": "simulate",
        "report": report,
        "table": table,
        "standard_errors": se,
    }));
    eprintln!(
        "{}: {} replicates per row, {} methods, finished in {:.1} s\n{}",
        cfg.name,
        cfg.replicates,
        cfg.methods.len(),
        started.elapsed().as_secs_f64(),
        report.to_tsv()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Detect(a) => detect(a),
        Command::Multi(a) => multi(a),
        Command::Network(a) => network(a),
        Command::Simulate(a) => simulate(a),
    }
}
