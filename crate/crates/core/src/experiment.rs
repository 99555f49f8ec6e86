//! Seed sweeps, parameter sweeps and the canned experiments.
//!
//! An experiment is a list of runs, one per (sweep value, seed). Each run
//! writes its node rows to a CSV file; once every run has finished an
//! aggregate CSV with the across-seed mean and standard deviation of each
//! metric is written next to a JSON manifest.
//!
//! Output layout under the output directory:
//!
//! ```text
//! <kind>/run_<value>_seed<seed>.csv
//! <kind>/aggregate.csv
//! <kind>/manifest.json
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::sim::config::{NodeGroup, RoutingMode, StrategyTag, WorkloadKind};
use crate::sim::{run, NodeRow, ScenarioConfig, ScenarioError};

/// Sweep key that splits one network's output by node group instead of
/// changing a parameter.
pub const GROUP_SWEEP: &str = "group";

pub const RUN_HEADER: [&str; 10] = [
    "iteration",
    "node",
    "group",
    "need",
    "requested",
    "received",
    "served",
    "queries",
    "resolved",
    "probes",
];

pub const AGGREGATE_HEADER: [&str; 10] = [
    "experiment",
    "sweep_key",
    "sweep_value",
    "group",
    "metric",
    "window_start",
    "window_end",
    "mean",
    "stddev",
    "seeds",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CapacityTiers,
    FreeRiders,
    Strategies,
    InterestRouting,
    Custom,
}

impl ExperimentKind {
    pub const CANNED: [ExperimentKind; 4] = [
        ExperimentKind::CapacityTiers,
        ExperimentKind::FreeRiders,
        ExperimentKind::Strategies,
        ExperimentKind::InterestRouting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CapacityTiers => "capacity-tiers",
            ExperimentKind::FreeRiders => "free-riders",
            ExperimentKind::Strategies => "strategies",
            ExperimentKind::InterestRouting => "interest-routing",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::CANNED.as_slice(), &[ExperimentKind::Custom]]
            .concat()
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::Invalid(format!("unknown experiment kind {s:?}")))
    }
}

/// A parameter to vary: a dotted scenario key (`serving.theta`,
/// `free_rider_pct`) or [`GROUP_SWEEP`], with TOML literal values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for Sweep {
    type Err = ExperimentError;

    /// Parses `key=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| ExperimentError::Invalid(format!("sweep {s:?} is not key=v1,v2")))?;
        let values: Vec<String> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        Ok(Sweep {
            key: key.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: ScenarioConfig,
    pub sweep: Option<Sweep>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Width of the aggregation windows, in iterations.
    pub window: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

pub const DEFAULT_WINDOW: u64 = 50;

impl ExperimentSpec {
    /// The canned experiment of `kind` with its default seeds.
    pub fn canned(
        kind: ExperimentKind,
        output: impl Into<PathBuf>,
    ) -> Result<Self, ExperimentError> {
        let (base, sweep, seeds) = match kind {
            ExperimentKind::CapacityTiers => (
                capacity_tiers_scenario(),
                group_sweep(&["low", "mid", "high"]),
                (1..=5).collect(),
            ),
            ExperimentKind::FreeRiders => (
                free_riders_scenario(),
                Sweep {
                    key: "free_rider_pct".into(),
                    values: ["5", "10", "20", "30"].map(String::from).to_vec(),
                },
                (1..=5).collect(),
            ),
            ExperimentKind::Strategies => (
                strategies_scenario(),
                group_sweep(&["BS", "GS1", "GS2"]),
                (1..=5).collect(),
            ),
            ExperimentKind::InterestRouting => (
                interest_routing_scenario(),
                Sweep {
                    key: "workload.routing".into(),
                    values: ["interest", "uniform"].map(String::from).to_vec(),
                },
                (1..=3).collect(),
            ),
            ExperimentKind::Custom => {
                return Err(ExperimentError::Invalid(
                    "custom experiments need a scenario".into(),
                ))
            }
        };
        Ok(ExperimentSpec {
            kind,
            base: base.resolve()?,
            sweep: Some(sweep),
            seeds,
            output: output.into(),
            window: DEFAULT_WINDOW,
            jobs: 0,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one seed is required".into(),
            ));
        }
        if self.window == 0 {
            return Err(ExperimentError::Invalid("window must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(ExperimentError::Invalid(format!(
                    "sweep {} has no values",
                    s.key
                )));
            }
            for v in &s.values {
                if v.is_empty()
                    || !v
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
                {
                    return Err(ExperimentError::Invalid(format!(
                        "sweep value {v:?} must be alphanumeric, '.', '_' or '-'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Directory the experiment's files go to.
    pub fn dir(&self) -> PathBuf {
        self.output.join(self.kind.name())
    }

    fn sweep_key(&self) -> &str {
        self.sweep.as_ref().map_or("", |s| s.key.as_str())
    }

    fn is_group_split(&self) -> bool {
        self.sweep_key() == GROUP_SWEEP
    }

    fn sweep_values(&self) -> Vec<String> {
        match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec!["base".into()],
        }
    }

    /// Resolved scenario for one sweep value.
    pub fn scenario_for(&self, value: &str, seed: u64) -> Result<ScenarioConfig, ExperimentError> {
        let mut cfg = match &self.sweep {
            Some(s) if s.key != GROUP_SWEEP => with_override(&self.base, &s.key, value)?,
            _ => self.base.clone(),
        };
        cfg.seed = seed;
        Ok(cfg.resolve()?)
    }

    pub fn run_file_name(value: &str, seed: u64) -> String {
        format!("run_{value}_seed{seed}.csv")
    }
}

fn group_sweep(labels: &[&str]) -> Sweep {
    Sweep {
        key: GROUP_SWEEP.into(),
        values: labels.iter().map(|s| s.to_string()).collect(),
    }
}

fn group(label: &str, count: usize, shared: f64) -> NodeGroup {
    NodeGroup {
        label: label.into(),
        count,
        shared_capacity: Some(shared),
        ..NodeGroup::default()
    }
}

/// Three equal tiers sharing 4, 8 and 12 units.
pub fn capacity_tiers_scenario() -> ScenarioConfig {
    ScenarioConfig {
        groups: vec![
            group("low", 67, 4.0),
            group("mid", 67, 8.0),
            group("high", 66, 12.0),
        ],
        ..ScenarioConfig::default()
    }
}

/// Homogeneous contributors sharing 8 units; the sweep converts some of
/// them into free riders.
pub fn free_riders_scenario() -> ScenarioConfig {
    ScenarioConfig {
        groups: vec![group("contributor", 200, 8.0)],
        ..ScenarioConfig::default()
    }
}

/// Honest requesters next to nodes inflating their requests 2× and 4×.
pub fn strategies_scenario() -> ScenarioConfig {
    let over = |label: &str, count, m| NodeGroup {
        strategy: StrategyTag::OverRequester,
        multiplier: m,
        ..group(label, count, 8.0)
    };
    ScenarioConfig {
        groups: vec![
            group("BS", 67, 8.0),
            over("GS1", 67, 2.0),
            over("GS2", 66, 4.0),
        ],
        ..ScenarioConfig::default()
    }
}

/// 1000 nodes querying a categorized catalog.
pub fn interest_routing_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        n_nodes: 1000,
        ..ScenarioConfig::default()
    };
    cfg.workload.kind = WorkloadKind::Catalog;
    cfg.workload.routing = RoutingMode::Interest;
    cfg
}

/// Copy of `base` with the dotted `key` set to the TOML literal `value`
/// (bare words are taken as strings).
pub fn with_override(
    base: &ScenarioConfig,
    key: &str,
    value: &str,
) -> Result<ScenarioConfig, ExperimentError> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut root = toml::Value::try_from(base)
        .map_err(|e| ExperimentError::Invalid(format!("cannot encode scenario: {e}")))?;
    let mut parts = key.split('.').peekable();
    let mut cur = &mut root;
    while let Some(part) = parts.next() {
        let table = cur.as_table_mut().ok_or_else(|| {
            ExperimentError::Invalid(format!("sweep key {key:?} is not a table path"))
        })?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), parsed);
            break;
        }
        cur = table
            .get_mut(part)
            .ok_or_else(|| ExperimentError::Invalid(format!("unknown sweep key {key:?}")))?;
    }
    root.try_into()
        .map_err(|e: toml::de::Error| ExperimentError::Invalid(format!("sweep {key}={value}: {e}")))
}

/// Sums over one (group, window) slice of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    rows: u64,
    need: u64,
    received: u64,
    served: u64,
    queries: u64,
    resolved: u64,
    probes: u64,
}

impl Tally {
    fn add(&mut self, r: &NodeRow) {
        self.rows += 1;
        self.need += r.need;
        self.received += r.received;
        self.served += r.served;
        self.queries += r.queries;
        self.resolved += r.resolved;
        self.probes += r.probes;
    }

    fn metrics(&self) -> Vec<(&'static str, f64)> {
        let per_row = |v: u64| v as f64 / self.rows as f64;
        let mut out = vec![
            ("need", per_row(self.need)),
            ("received", per_row(self.received)),
            ("served", per_row(self.served)),
        ];
        if self.queries > 0 {
            out.push((
                "resolved_fraction",
                self.resolved as f64 / self.queries as f64,
            ));
        }
        if self.resolved > 0 {
            out.push((
                "probes_per_query",
                self.probes as f64 / self.resolved as f64,
            ));
        }
        out
    }
}

/// Windows summarized for a run: the whole post-acquaintance span first,
/// then consecutive `width`-iteration windows.
pub fn windows(acquaintance: u64, iterations: u64, width: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    if acquaintance >= iterations {
        return out;
    }
    out.push((acquaintance, iterations));
    let mut start = acquaintance;
    while start < iterations {
        let end = (start + width).min(iterations);
        out.push((start, end));
        start = end;
    }
    out
}

type GroupWindow = (String, u64, u64);

/// Per-seed metric values keyed by (group, window start, window end).
fn summarize(
    rows: &[NodeRow],
    wins: &[(u64, u64)],
) -> BTreeMap<GroupWindow, Vec<(&'static str, f64)>> {
    let mut tallies: BTreeMap<GroupWindow, Tally> = BTreeMap::new();
    for r in rows {
        for &(s, e) in wins {
            if r.iteration >= s && r.iteration < e {
                tallies.entry((r.group.clone(), s, e)).or_default().add(r);
            }
        }
    }
    tallies.into_iter().map(|(k, t)| (k, t.metrics())).collect()
}

/// One line of the aggregate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: String,
    pub sweep_key: String,
    pub sweep_value: String,
    pub group: String,
    pub metric: String,
    pub window_start: u64,
    pub window_end: u64,
    pub mean: f64,
    pub stddev: f64,
    pub seeds: usize,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct RunOutput {
    value: String,
    seed: u64,
    files: Vec<String>,
    summary: BTreeMap<GroupWindow, Vec<(&'static str, f64)>>,
}

#[derive(Debug, Serialize)]
struct ManifestRun {
    file: String,
    sweep_value: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'a str,
    sweep: Option<&'a Sweep>,
    seeds: &'a [u64],
    window: u64,
    runs: Vec<ManifestRun>,
    /// Resolved scenario per sweep value, for the first seed.
    scenarios: BTreeMap<String, ScenarioConfig>,
}

/// What an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub run_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub manifest_file: PathBuf,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentReport {
    /// Looks up one aggregate mean.
    pub fn mean(
        &self,
        sweep_value: &str,
        group: &str,
        metric: &str,
        window: (u64, u64),
    ) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|r| {
                r.sweep_value == sweep_value
                    && r.group == group
                    && r.metric == metric
                    && (r.window_start, r.window_end) == window
            })
            .map(|r| r.mean)
    }
}

fn write_run_csv(path: &Path, rows: &[&NodeRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_HEADER)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.node.to_string(),
            r.group.clone(),
            r.need.to_string(),
            r.requested.to_string(),
            r.received.to_string(),
            r.served.to_string(),
            r.queries.to_string(),
            r.resolved.to_string(),
            r.probes.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads node rows back from a run CSV.
pub fn read_run_csv(path: &Path) -> Result<Vec<NodeRow>, ExperimentError> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    if header.iter().ne(RUN_HEADER) {
        return Err(ExperimentError::Invalid(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let bad = |what: &str| ExperimentError::Invalid(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(RUN_HEADER[i]));
        out.push(NodeRow {
            iteration: num(0)?,
            node: crate::NodeId(rec[1].parse().map_err(|_| bad("node"))?),
            group: rec[2].to_string(),
            need: num(3)?,
            requested: num(4)?,
            received: num(5)?,
            served: num(6)?,
            queries: num(7)?,
            resolved: num(8)?,
            probes: num(9)?,
        });
    }
    Ok(out)
}

/// Reads an aggregate CSV.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>, ExperimentError> {
    let mut rd = csv::Reader::from_path(path)?;
    let bad = |what: &str| ExperimentError::Invalid(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(AggregateRow {
            experiment: rec[0].to_string(),
            sweep_key: rec[1].to_string(),
            sweep_value: rec[2].to_string(),
            group: rec[3].to_string(),
            metric: rec[4].to_string(),
            window_start: rec[5].parse().map_err(|_| bad("window_start"))?,
            window_end: rec[6].parse().map_err(|_| bad("window_end"))?,
            mean: rec[7].parse().map_err(|_| bad("mean"))?,
            stddev: rec[8].parse().map_err(|_| bad("stddev"))?,
            seeds: rec[9].parse().map_err(|_| bad("seeds"))?,
        });
    }
    Ok(out)
}

/// Aggregates per-seed summaries; the rows come out sorted by sweep value
/// (in sweep order), group, metric and window.
fn aggregate(spec: &ExperimentSpec, outputs: &[RunOutput]) -> Vec<AggregateRow> {
    let order: BTreeMap<String, usize> = spec
        .sweep_values()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let mut cells: BTreeMap<(usize, String, &'static str, u64, u64), Vec<f64>> = BTreeMap::new();
    for out in outputs {
        for ((group, s, e), metrics) in &out.summary {
            if spec.is_group_split() && *group != out.value {
                continue;
            }
            for &(m, v) in metrics {
                cells
                    .entry((order[&out.value], group.clone(), m, *s, *e))
                    .or_default()
                    .push(v);
            }
        }
    }
    let values = spec.sweep_values();
    cells
        .into_iter()
        .map(|((vi, group, metric, s, e), vals)| {
            let (mean, stddev) = mean_stddev(&vals);
            AggregateRow {
                experiment: spec.kind.name().to_string(),
                sweep_key: spec.sweep_key().to_string(),
                sweep_value: values[vi].clone(),
                group,
                metric: metric.to_string(),
                window_start: s,
                window_end: e,
                mean,
                stddev,
                seeds: vals.len(),
            }
        })
        .collect()
}

fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.sweep_key.clone(),
            r.sweep_value.clone(),
            r.group.clone(),
            r.metric.clone(),
            r.window_start.to_string(),
            r.window_end.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.stddev),
            r.seeds.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn execute(
    spec: &ExperimentSpec,
    dir: &Path,
    value: &str,
    seed: u64,
) -> Result<RunOutput, ExperimentError> {
    let cfg = spec.scenario_for(value, seed)?;
    let series = run(&cfg)?;
    let wins = windows(cfg.acquaintance, cfg.iterations, spec.window);
    let summary = summarize(&series.nodes, &wins);
    let mut files = Vec::new();
    if spec.is_group_split() {
        for label in spec.sweep_values() {
            let rows: Vec<&NodeRow> = series.nodes.iter().filter(|r| r.group == label).collect();
            let name = ExperimentSpec::run_file_name(&label, seed);
            write_run_csv(&dir.join(&name), &rows)?;
            files.push(name);
        }
    } else {
        let rows: Vec<&NodeRow> = series.nodes.iter().collect();
        let name = ExperimentSpec::run_file_name(value, seed);
        write_run_csv(&dir.join(&name), &rows)?;
        files.push(name);
    }
    Ok(RunOutput {
        value: value.to_string(),
        seed,
        files,
        summary,
    })
}

/// Runs every (sweep value, seed) pair, then writes the aggregate and the
/// manifest.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    spec.validate()?;
    let dir = spec.dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let values = if spec.is_group_split() {
        vec![String::new()]
    } else {
        spec.sweep_values()
    };
    let mut scenarios = BTreeMap::new();
    for v in &values {
        let key = if v.is_empty() {
            "base".to_string()
        } else {
            v.clone()
        };
        scenarios.insert(key, spec.scenario_for(v, spec.seeds[0])?);
    }
    let plan: Vec<(String, u64)> = values
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v.clone(), s)))
        .collect();

    let work = || -> Result<Vec<RunOutput>, ExperimentError> {
        plan.par_iter()
            .map(|(v, s)| execute(spec, &dir, v, *s))
            .collect()
    };
    let outputs = if spec.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| ExperimentError::Invalid(format!("thread pool: {e}")))?
            .install(work)?
    } else {
        work()?
    };

    let expanded: Vec<RunOutput>;
    let outputs = if spec.is_group_split() {
        expanded = outputs
            .iter()
            .flat_map(|o| {
                spec.sweep_values()
                    .into_iter()
                    .zip(&o.files)
                    .map(move |(label, file)| RunOutput {
                        value: label,
                        seed: o.seed,
                        files: vec![file.clone()],
                        summary: o.summary.clone(),
                    })
            })
            .collect();
        &expanded
    } else {
        &outputs
    };

    let aggregate = aggregate(spec, outputs);
    let aggregate_file = dir.join("aggregate.csv");
    write_aggregate_csv(&aggregate_file, &aggregate)?;

    let mut runs: Vec<ManifestRun> = outputs
        .iter()
        .flat_map(|o| {
            o.files.iter().map(move |f| ManifestRun {
                file: f.clone(),
                sweep_value: o.value.clone(),
                seed: o.seed,
            })
        })
        .collect();
    runs.sort_by(|a, b| a.file.cmp(&b.file));
    let run_files = runs.iter().map(|r| dir.join(&r.file)).collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: spec.kind.name(),
        sweep: spec.sweep.as_ref(),
        seeds: &spec.seeds,
        window: spec.window,
        runs,
        scenarios,
    };
    let manifest_file = dir.join("manifest.json");
    let mut f = fs::File::create(&manifest_file).map_err(io_err(&manifest_file))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(io_err(&manifest_file))?;

    Ok(ExperimentReport {
        dir,
        run_files,
        aggregate_file,
        manifest_file,
        aggregate,
    })
}

/// Recomputes aggregate rows from the run CSVs of a finished experiment.
pub fn rederive_aggregate(spec: &ExperimentSpec) -> Result<Vec<AggregateRow>, ExperimentError> {
    let dir = spec.dir();
    let mut outputs = Vec::new();
    for value in spec.sweep_values() {
        for &seed in &spec.seeds {
            let cfg = spec.scenario_for(if spec.is_group_split() { "" } else { &value }, seed)?;
            let wins = windows(cfg.acquaintance, cfg.iterations, spec.window);
            let rows = read_run_csv(&dir.join(ExperimentSpec::run_file_name(&value, seed)))?;
            outputs.push(RunOutput {
                value: value.clone(),
                seed,
                files: Vec::new(),
                summary: summarize(&rows, &wins),
            });
        }
    }
    Ok(aggregate(spec, &outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for k in ExperimentKind::CANNED {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("fig9".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "serving.theta=0.5, 1,2".parse().unwrap();
        assert_eq!(s.key, "serving.theta");
        assert_eq!(s.values, vec!["0.5", "1", "2"]);
        assert!("theta".parse::<Sweep>().is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let base = ScenarioConfig::default().resolve().unwrap();
        let c = with_override(&base, "serving.theta", "2.5").unwrap();
        assert_eq!(c.serving.theta, 2.5);
        let c = with_override(&base, "workload.routing", "uniform").unwrap();
        assert_eq!(c.workload.routing, RoutingMode::Uniform);
        let c = with_override(&base, "free_rider_pct", "10").unwrap();
        assert_eq!(c.resolve().unwrap().free_rider_count(), 20);
        assert!(with_override(&base, "serving.nope", "1").is_err());
        assert!(with_override(&base, "serving.theta", "high").is_err());
    }

    #[test]
    fn window_layout() {
        assert_eq!(
            windows(50, 160, 50),
            vec![(50, 160), (50, 100), (100, 150), (150, 160)]
        );
        assert!(windows(10, 10, 5).is_empty());
    }

    #[test]
    fn sample_stddev() {
        let (m, s) = mean_stddev(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(mean_stddev(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn canned_specs_are_valid() {
        for k in ExperimentKind::CANNED {
            let spec = ExperimentSpec::canned(k, "out").unwrap();
            spec.validate().unwrap();
            for v in spec.sweep_values() {
                let v = if spec.is_group_split() {
                    String::new()
                } else {
                    v
                };
                spec.scenario_for(&v, 1).unwrap();
            }
        }
        let fr = ExperimentSpec::canned(ExperimentKind::FreeRiders, "out").unwrap();
        assert_eq!(fr.scenario_for("30", 1).unwrap().free_rider_count(), 60);
        assert!(ExperimentSpec::canned(ExperimentKind::Custom, "out").is_err());
    }
}
