//! Scenario description and the scenario file format.
//!
//! Scenario files are TOML. Every key is optional; omitted keys take the
//! defaults below. A minimal file:
//!
//! ```toml
//! n_nodes = 200
//! iterations = 500
//! free_rider_pct = 10
//!
//! [[groups]]
//! label = "low"
//! count = 100
//! shared_capacity = 4
//!
//! [[groups]]
//! label = "high"
//! count = 100
//! shared_capacity = 12
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{NuParams, ServingParams};
use crate::capacity::CapacityParams;
use crate::interest::InterestParams;
use crate::model::{GlobalParams, Strategy};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyTag {
    Honest,
    FreeRider,
    OverRequester,
}

/// A block of identical nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeGroup {
    pub label: String,
    pub count: usize,
    /// Download capacity, rate units per iteration.
    pub download_capacity: f64,
    /// Fixed shared capacity; with `controller` set this is the starting
    /// point. Absent means half the download capacity.
    pub shared_capacity: Option<f64>,
    pub controller: bool,
    pub strategy: StrategyTag,
    /// Request inflation for over-requesters.
    pub multiplier: f64,
    pub eta: Option<f64>,
}

impl Default for NodeGroup {
    fn default() -> Self {
        Self {
            label: "all".into(),
            count: 0,
            download_capacity: 100.0,
            shared_capacity: None,
            controller: false,
            strategy: StrategyTag::Honest,
            multiplier: 1.0,
            eta: None,
        }
    }
}

impl NodeGroup {
    pub fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyTag::Honest => Strategy::Honest,
            StrategyTag::FreeRider => Strategy::FreeRider,
            StrategyTag::OverRequester => Strategy::OverRequester {
                multiplier: self.multiplier,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Every node needs a random number of units each iteration and any
    /// peer can serve them.
    Bandwidth,
    /// Nodes query for catalog files and download them from the holder.
    Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingMode {
    /// Probe ranked neighbours first.
    Interest,
    /// Probe peers in uniformly random order.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    pub kind: WorkloadKind,
    /// Per-iteration need, in allocation units (bandwidth workload).
    pub demand_min: u64,
    pub demand_max: u64,
    /// Servers a request is spread over.
    pub fanout: usize,
    /// Random peers sampled per iteration before ranking picks `fanout`.
    pub candidate_pool: usize,
    /// Queries per node per iteration (catalog workload).
    pub queries_per_node: usize,
    /// Probe cap per query.
    pub ttl: usize,
    /// Size of one catalog file, in allocation units.
    pub file_size: u64,
    pub routing: RoutingMode,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::Bandwidth,
            demand_min: 8,
            demand_max: 16,
            fanout: 4,
            candidate_pool: 6,
            queries_per_node: 1,
            ttl: 200,
            file_size: 1,
            routing: RoutingMode::Interest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContentModel {
    pub n_categories: u32,
    pub interests_per_node: u32,
    pub catalog_size: u32,
    /// Fraction of each interest category's files a node holds.
    pub holding_fraction: f64,
}

impl Default for ContentModel {
    fn default() -> Self {
        Self {
            n_categories: 20,
            interests_per_node: 2,
            catalog_size: 2000,
            holding_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub iterations: u64,
    /// Iterations during which servers ignore reputation.
    pub acquaintance: u64,
    pub seed: u64,
    /// Percentage of nodes turned into free riders, spread evenly over
    /// node ids.
    pub free_rider_pct: f64,
    /// Node blocks; empty means one honest block of `n_nodes`.
    pub groups: Vec<NodeGroup>,
    pub workload: Workload,
    pub content: ContentModel,
    pub params: GlobalParams,
    pub nu: NuParams,
    pub serving: ServingParams,
    pub capacity: CapacityParams,
    pub interest: InterestParams,
    /// Iterations between reputation/neighbour dumps; 0 disables them.
    pub dump_interval: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            iterations: 500,
            acquaintance: 50,
            seed: 1,
            free_rider_pct: 0.0,
            groups: Vec::new(),
            workload: Workload::default(),
            content: ContentModel::default(),
            params: GlobalParams::default(),
            nu: NuParams::default(),
            serving: ServingParams::default(),
            capacity: CapacityParams::default(),
            interest: InterestParams::default(),
            dump_interval: 0,
        }
    }
}

/// One node after group expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub label: String,
    pub download_capacity: f64,
    pub shared_capacity: Option<f64>,
    pub controller: bool,
    pub strategy: Strategy,
    pub eta: f64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.resolve()
    }

    /// Fills derived defaults and validates. Idempotent.
    pub fn resolve(mut self) -> Result<Self, ScenarioError> {
        if self.groups.is_empty() {
            self.groups.push(NodeGroup {
                count: self.n_nodes,
                ..NodeGroup::default()
            });
        }
        if self.params.q_rd_universal.is_none() {
            let max = self
                .groups
                .iter()
                .map(|g| g.download_capacity)
                .fold(0.0, f64::max);
            if max > 0.0 {
                self.params.q_rd_universal = Some(max);
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.n_nodes < 2 {
            errs.push("n_nodes must be at least 2".to_string());
        }
        if self.iterations > 0 && self.acquaintance >= self.iterations {
            errs.push("acquaintance must be shorter than iterations".to_string());
        }
        let total: usize = self.groups.iter().map(|g| g.count).sum();
        if total != self.n_nodes {
            errs.push(format!(
                "group counts sum to {total}, n_nodes is {}",
                self.n_nodes
            ));
        }
        if !(0.0..=100.0).contains(&self.free_rider_pct) {
            errs.push("free_rider_pct must lie in [0, 100]".to_string());
        }
        for g in &self.groups {
            if !(g.download_capacity > 0.0) {
                errs.push(format!(
                    "group {}: download_capacity must be positive",
                    g.label
                ));
            }
            if let Some(s) = g.shared_capacity {
                if !(s >= 0.0) {
                    errs.push(format!(
                        "group {}: shared_capacity must be non-negative",
                        g.label
                    ));
                }
            }
            if g.strategy == StrategyTag::OverRequester && !(g.multiplier > 1.0) {
                errs.push(format!(
                    "group {}: over-requester multiplier must exceed 1",
                    g.label
                ));
            }
            if g.strategy != StrategyTag::OverRequester && g.multiplier != 1.0 {
                errs.push(format!(
                    "group {}: multiplier applies to over-requesters only",
                    g.label
                ));
            }
            if let Some(eta) = g.eta {
                if !(0.0..1.0).contains(&eta) {
                    errs.push(format!("group {}: eta must lie in [0, 1)", g.label));
                }
            }
        }
        if let Err(e) = self.params.validate() {
            errs.push(e.to_string());
        }
        if let Some(q) = self.params.q_rd_universal {
            let max = self
                .groups
                .iter()
                .map(|g| g.download_capacity)
                .fold(0.0, f64::max);
            if q < max {
                errs.push("params.q_rd_universal is below the largest download capacity".into());
            }
        }
        let w = &self.workload;
        if w.demand_min == 0 || w.demand_min > w.demand_max {
            errs.push("workload: need 1 <= demand_min <= demand_max".into());
        }
        if w.fanout == 0 || w.candidate_pool < w.fanout {
            errs.push("workload: need 1 <= fanout <= candidate_pool".into());
        }
        if w.ttl == 0 || w.file_size == 0 {
            errs.push("workload: ttl and file_size must be positive".into());
        }
        let c = &self.content;
        if w.kind == WorkloadKind::Catalog {
            if c.n_categories == 0
                || c.interests_per_node == 0
                || c.interests_per_node > c.n_categories
            {
                errs.push("content: need 1 <= interests_per_node <= n_categories".into());
            }
            if c.catalog_size < c.n_categories {
                errs.push("content: catalog_size must be at least n_categories".into());
            }
            if !(c.holding_fraction > 0.0 && c.holding_fraction <= 1.0) {
                errs.push("content: holding_fraction must lie in (0, 1]".into());
            }
        }
        if !(self.serving.delta_units > 0.0) || !(self.serving.theta >= 0.0) {
            errs.push("serving: delta_units must be positive and theta non-negative".into());
        }
        let nu = &self.nu;
        if nu.window == 0 || !(nu.nu_min > 0.0 && nu.nu_min <= nu.nu_max) {
            errs.push("nu: need window > 0 and 0 < nu_min <= nu_max".into());
        }
        if self.capacity.period == 0 || !(self.capacity.delta_fraction > 0.0) {
            errs.push("capacity: period and delta_fraction must be positive".into());
        }
        let ip = &self.interest;
        if !(ip.base > 1.0 && ip.base_min > 1.0)
            || !(0.0..=1.0).contains(&ip.alpha_high)
            || !(0.0..=1.0).contains(&ip.alpha_low)
        {
            errs.push("interest: bases must exceed 1 and alphas lie in [0, 1]".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    /// Number of free riders implied by `free_rider_pct`.
    pub fn free_rider_count(&self) -> usize {
        (self.n_nodes as f64 * self.free_rider_pct / 100.0).round() as usize
    }

    /// Expands groups into per-node specs, in `NodeId` order. Free riders
    /// from `free_rider_pct` replace evenly spaced nodes.
    pub fn node_specs(&self) -> Vec<NodeSpec> {
        let mut nodes: Vec<NodeSpec> = self
            .groups
            .iter()
            .flat_map(|g| {
                std::iter::repeat_with(move || NodeSpec {
                    label: g.label.clone(),
                    download_capacity: g.download_capacity,
                    shared_capacity: g.shared_capacity,
                    controller: g.controller,
                    strategy: g.strategy(),
                    eta: g.eta.unwrap_or(self.params.eta_default),
                })
                .take(g.count)
            })
            .collect();
        let n = nodes.len();
        let k = self.free_rider_count().min(n);
        for (i, node) in nodes.iter_mut().enumerate() {
            if (i + 1) * k / n > i * k / n {
                node.label = "free-rider".into();
                node.strategy = Strategy::FreeRider;
                node.shared_capacity = Some(0.0);
                node.controller = false;
            }
        }
        nodes
    }

    /// Universal scale `Q_rd`, resolved.
    pub fn q_rd_universal(&self) -> f64 {
        self.params.q_rd_universal.unwrap_or_else(|| {
            self.groups
                .iter()
                .map(|g| g.download_capacity)
                .fold(0.0, f64::max)
        })
    }

    /// Mean request size in rate units, used for the newcomer default.
    pub fn mean_request(&self) -> f64 {
        let w = &self.workload;
        let units = match w.kind {
            WorkloadKind::Bandwidth => (w.demand_min + w.demand_max) as f64 / 2.0 / w.fanout as f64,
            WorkloadKind::Catalog => w.file_size as f64,
        };
        units.max(1.0) * self.serving.delta_units
    }

    /// Newcomer reputation: half the mean request relative to `Q_rd`.
    pub fn newcomer_reputation(&self) -> f64 {
        0.5 * self.mean_request() / self.q_rd_universal()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

/// Reads and resolves a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_toml_str(&text)
}
