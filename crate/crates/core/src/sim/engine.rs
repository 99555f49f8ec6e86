//! Discrete-time orchestration.
//!
//! One iteration runs five phases in a fixed order:
//!
//! 1. every node (ascending id) generates demand, picks servers, and
//!    enqueues requests at them;
//! 2. every server decides whether to serve its queue and, if so, selects
//!    and allocates;
//! 3. decided requests become rate observations that update the
//!    requester's reputation table and both sides' interaction stats;
//! 4. periodic controllers run (ν, capacity, base, α, neighbour lists);
//! 5. per-node rows are emitted.
//!
//! All randomness comes from per-node ChaCha streams derived from the
//! scenario seed and the node id, so a run is a pure function of its
//! configuration.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{NodeSpec, RoutingMode, ScenarioConfig, ScenarioError, WorkloadKind};
use super::metrics::{
    AllocatorRow, CapacityRow, MetricsSeries, NeighborRow, NodeRow, ReputationRow,
};
use crate::allocator::{AllocationRequest, AllocatorState};
use crate::capacity::{initial_capacity, tune_epsilon, CapacityState};
use crate::interest::{
    adapt_alpha, adapt_base, churn, rank_servers, InteractionStats, InterestConfig,
};
use crate::model::{validate_observation, NodeId, NodeParams, RateObservation};
use crate::reputation::{effective_reputation, reputation_sample, ReputationTable};

/// Periods of download history used to tune the significance threshold.
const EPSILON_HISTORY: usize = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a node's private random stream.
pub fn node_seed(scenario_seed: u64, node: NodeId) -> u64 {
    splitmix64(splitmix64(scenario_seed) ^ splitmix64(u64::from(node.0) + 1))
}

#[derive(Debug, Clone)]
struct Controller {
    state: CapacityState,
    history: VecDeque<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    label: String,
    params: NodeParams,
    table: ReputationTable,
    stats: InteractionStats,
    alloc: AllocatorState,
    controller: Option<Controller>,
    shared: f64,
    interest: InterestConfig,
    rng: ChaCha8Rng,
    categories: Vec<u32>,
    /// Sorted file ids.
    holdings: Vec<u32>,
    ranked: Vec<NodeId>,
    ranked_tries: u64,
    ranked_hits: u64,
    period_received: u64,
}

impl Node {
    fn holds(&self, file: u32) -> bool {
        self.holdings.binary_search(&file).is_ok()
    }
}

#[derive(Debug, Clone)]
struct Catalog {
    by_category: Vec<Vec<u32>>,
}

/// Outcome of one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutcome {
    /// Probes spent; equals the TTL when unresolved.
    pub probes: usize,
    pub holder: Option<NodeId>,
    pub probed: Vec<NodeId>,
}

/// Probes `ranked` in order, then uniformly random unprobed peers, until
/// `holds` accepts one or `ttl` probes are spent.
pub fn probe_for<R: Rng + ?Sized>(
    querier: NodeId,
    n_nodes: usize,
    ranked: &[NodeId],
    ttl: usize,
    holds: impl Fn(NodeId) -> bool,
    rng: &mut R,
) -> QueryOutcome {
    let mut seen = vec![false; n_nodes];
    seen[querier.index()] = true;
    let peers = n_nodes - 1;
    let mut probed = Vec::new();
    let mut ranked_iter = ranked.iter().copied().filter(|&p| p != querier);
    while probed.len() < ttl.min(peers) {
        let next = loop {
            if let Some(p) = ranked_iter.next() {
                if !seen[p.index()] {
                    break p;
                }
                continue;
            }
            let p = rng.gen_range(0..n_nodes);
            if !seen[p] {
                break NodeId::from(p);
            }
        };
        seen[next.index()] = true;
        probed.push(next);
        if holds(next) {
            return QueryOutcome {
                probes: probed.len(),
                holder: Some(next),
                probed,
            };
        }
    }
    QueryOutcome {
        probes: ttl,
        holder: None,
        probed,
    }
}

struct Transfer {
    requester: NodeId,
    server: NodeId,
    units: u64,
    granted: u64,
}

/// A built network plus everything needed to advance it.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    nodes: Vec<Node>,
    catalog: Option<Catalog>,
    q_rd_universal: f64,
    t_newcomer: f64,
}

impl Simulation {
    /// Instantiates every node with its own random stream and, for the
    /// catalog workload, its interests and holdings.
    pub fn build(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let config = config.clone().resolve()?;
        let specs = config.node_specs();
        let catalog = (config.workload.kind == WorkloadKind::Catalog).then(|| {
            let c = &config.content;
            let mut by_category = vec![Vec::new(); c.n_categories as usize];
            for f in 0..c.catalog_size {
                by_category[(f % c.n_categories) as usize].push(f);
            }
            Catalog { by_category }
        });
        let delta = config.serving.delta_units;
        let nodes = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                Self::build_node(&config, catalog.as_ref(), NodeId::from(i), spec, delta)
            })
            .collect();
        Ok(Self {
            q_rd_universal: config.q_rd_universal(),
            t_newcomer: config.newcomer_reputation(),
            config,
            nodes,
            catalog,
        })
    }

    fn build_node(
        config: &ScenarioConfig,
        catalog: Option<&Catalog>,
        id: NodeId,
        spec: &NodeSpec,
        delta: f64,
    ) -> Node {
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed(config.seed, id));
        let mut categories = Vec::new();
        let mut holdings = Vec::new();
        if let Some(cat) = catalog {
            let c = &config.content;
            categories = index::sample(
                &mut rng,
                c.n_categories as usize,
                c.interests_per_node as usize,
            )
            .into_iter()
            .map(|x| x as u32)
            .collect();
            categories.sort_unstable();
            for &c_id in &categories {
                for &f in &cat.by_category[c_id as usize] {
                    if rng.gen::<f64>() < c.holding_fraction {
                        holdings.push(f);
                    }
                }
            }
            holdings.sort_unstable();
        }
        let shared = if spec.strategy.shares() {
            initial_capacity(spec.shared_capacity, spec.download_capacity)
        } else {
            0.0
        };
        let controller = spec.controller.then(|| Controller {
            state: CapacityState::new(
                shared,
                config.capacity.delta_fraction * spec.download_capacity,
                config.capacity.epsilon_min,
            ),
            history: VecDeque::new(),
        });
        Node {
            label: spec.label.clone(),
            params: NodeParams {
                node: id,
                q_rd: spec.download_capacity,
                eta: spec.eta,
                strategy: spec.strategy,
            },
            table: ReputationTable::new(id),
            stats: InteractionStats::new(id),
            alloc: AllocatorState::new(config.nu.nu_initial, (shared / delta).floor() as u64),
            controller,
            shared,
            interest: InterestConfig::from_params(&config.interest),
            rng,
            categories,
            holdings,
            ranked: Vec::new(),
            ranked_tries: 0,
            ranked_hits: 0,
            period_received: 0,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reputation(&self, node: NodeId) -> &ReputationTable {
        &self.nodes[node.index()].table
    }

    pub fn interactions(&self, node: NodeId) -> &InteractionStats {
        &self.nodes[node.index()].stats
    }

    pub fn shared_capacity(&self, node: NodeId) -> f64 {
        self.nodes[node.index()].shared
    }

    pub fn nu(&self, node: NodeId) -> f64 {
        self.nodes[node.index()].alloc.nu
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.index()].label
    }

    pub fn ranked_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node.index()].ranked
    }

    pub fn holds(&self, node: NodeId, file: u32) -> bool {
        self.nodes[node.index()].holds(file)
    }

    pub fn interests(&self, node: NodeId) -> &[u32] {
        &self.nodes[node.index()].categories
    }

    /// Files of a category, if the catalog workload is active.
    pub fn category_files(&self, category: u32) -> Option<&[u32]> {
        self.catalog
            .as_ref()
            .and_then(|c| c.by_category.get(category as usize))
            .map(Vec::as_slice)
    }

    /// Runs one query from `querier` for `file` and records the probes in
    /// both sides' interaction stats.
    pub fn query_routing_trial(
        &mut self,
        querier: NodeId,
        file: u32,
        mode: RoutingMode,
    ) -> QueryOutcome {
        let n = self.nodes.len();
        let ttl = self.config.workload.ttl;
        let ranked = match mode {
            RoutingMode::Interest => std::mem::take(&mut self.nodes[querier.index()].ranked),
            RoutingMode::Uniform => Vec::new(),
        };
        let outcome = {
            let (before, rest) = self.nodes.split_at_mut(querier.index());
            let (me, after) = rest.split_first_mut().expect("querier exists");
            let holds = |p: NodeId| {
                let i = p.index();
                match i.cmp(&querier.index()) {
                    std::cmp::Ordering::Less => before[i].holds(file),
                    std::cmp::Ordering::Greater => after[i - querier.index() - 1].holds(file),
                    std::cmp::Ordering::Equal => false,
                }
            };
            probe_for(querier, n, &ranked, ttl, holds, &mut me.rng)
        };
        let ranked_len = ranked.len();
        for (k, &p) in outcome.probed.iter().enumerate() {
            let answered = outcome.holder == Some(p);
            self.nodes[querier.index()].stats.record(p, answered);
            self.nodes[p.index()].stats.record(querier, answered);
            if mode == RoutingMode::Interest && k < ranked_len {
                let q = &mut self.nodes[querier.index()];
                q.ranked_tries += 1;
                q.ranked_hits += u64::from(answered);
            }
        }
        if mode == RoutingMode::Interest {
            self.nodes[querier.index()].ranked = ranked;
        }
        outcome
    }

    fn choose_servers(&mut self, i: usize) -> Vec<NodeId> {
        let n = self.nodes.len();
        let w = &self.config.workload;
        let pool = w.candidate_pool.min(n - 1);
        let node = &mut self.nodes[i];
        let candidates: BTreeSet<NodeId> = index::sample(&mut node.rng, n - 1, pool)
            .into_iter()
            .map(|k| NodeId::from(if k >= i { k + 1 } else { k }))
            .collect();
        let cfg = InterestConfig {
            neighbor_count: w.fanout,
            ..node.interest
        };
        rank_servers(&node.stats, &node.table, &cfg, &candidates)
            .into_iter()
            .map(|(id, _)| id)
            .collect()
    }

    fn issue_requests(&mut self, rows: &mut [NodeRow]) -> Vec<(NodeId, NodeId, u64)> {
        let n = self.nodes.len();
        let w = self.config.workload.clone();
        let delta = self.config.serving.delta_units;
        let mut outgoing = Vec::new();
        for i in 0..n {
            match w.kind {
                WorkloadKind::Bandwidth => {
                    let need = self.nodes[i].rng.gen_range(w.demand_min..=w.demand_max);
                    rows[i].need = need;
                    let p = self.nodes[i].params;
                    let total = (need as f64 * p.strategy.multiplier()).ceil() as u64;
                    let servers = self.choose_servers(i);
                    let k = servers.len() as u64;
                    let max_units = (p.q_rd / delta).floor() as u64;
                    for (j, s) in servers.into_iter().enumerate() {
                        let units = (total / k + u64::from((j as u64) < total % k)).min(max_units);
                        if units > 0 {
                            outgoing.push((NodeId::from(i), s, units));
                        }
                    }
                }
                WorkloadKind::Catalog => {
                    for _ in 0..w.queries_per_node {
                        let Some(file) = self.pick_wanted_file(i) else {
                            continue;
                        };
                        let out = self.query_routing_trial(NodeId::from(i), file, w.routing);
                        rows[i].queries += 1;
                        if let Some(h) = out.holder {
                            rows[i].resolved += 1;
                            rows[i].probes += out.probes as u64;
                            rows[i].need += w.file_size;
                            outgoing.push((NodeId::from(i), h, w.file_size));
                        }
                    }
                }
            }
        }
        outgoing
    }

    fn pick_wanted_file(&mut self, i: usize) -> Option<u32> {
        let catalog = self.catalog.as_ref()?;
        let node = &mut self.nodes[i];
        for _ in 0..16 {
            let c = node.categories[node.rng.gen_range(0..node.categories.len())];
            let files = &catalog.by_category[c as usize];
            let f = files[node.rng.gen_range(0..files.len())];
            if !node.holds(f) {
                return Some(f);
            }
        }
        None
    }

    fn enqueue(&mut self, requester: NodeId, server: NodeId, units: u64, iteration: u64) {
        let delta = self.config.serving.delta_units;
        let t_new = self.t_newcomer;
        let node = &mut self.nodes[server.index()];
        let q_rd = node.params.q_rd;
        let table = &node.table;
        let score = |u: u64| {
            effective_reputation(table, requester, u as f64 * delta, q_rd, t_new)
                .expect("request size is positive")
        };
        let req = AllocationRequest {
            requester,
            q_r_units: units,
            arrival: iteration,
            t_eff: score(units),
        };
        node.alloc.enqueue(req, score);
    }

    /// Advances the network by one iteration and returns what it measured.
    pub fn step(&mut self, iteration: u64) -> MetricsSeries {
        let n = self.nodes.len();
        let cfg = self.config.clone();
        let delta = cfg.serving.delta_units;
        let use_reputation = iteration >= cfg.acquaintance;
        let mut out = MetricsSeries::default();
        let mut rows: Vec<NodeRow> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| NodeRow {
                iteration,
                node: NodeId::from(i),
                group: node.label.clone(),
                ..NodeRow::default()
            })
            .collect();

        // (1) requests
        let outgoing = self.issue_requests(&mut rows);
        for (requester, server, units) in outgoing {
            self.enqueue(requester, server, units, iteration);
        }

        // (2) serving
        let mut transfers = Vec::new();
        for s in 0..n {
            let node = &mut self.nodes[s];
            node.alloc.tick();
            let (pending, selected, granted) = if node.alloc.should_serve(iteration, &cfg.serving) {
                let batch = node
                    .alloc
                    .serve(cfg.params.x, use_reputation, &mut node.rng);
                for req in &batch.pending {
                    transfers.push(Transfer {
                        requester: req.requester,
                        server: NodeId::from(s),
                        units: req.q_r_units,
                        granted: batch.grant.get(req.requester),
                    });
                }
                (
                    batch.pending.len(),
                    batch.selected.len(),
                    batch.grant.total(),
                )
            } else {
                (node.alloc.pending().len(), 0, 0)
            };
            let utilization = if node.alloc.shared_units == 0 {
                0.0
            } else {
                granted as f64 / node.alloc.shared_units as f64
            };
            out.allocator.push(AllocatorRow {
                iteration,
                node: NodeId::from(s),
                pending,
                selected,
                granted,
                utilization,
                nu: node.alloc.nu,
            });
        }

        // (3) observations
        for t in transfers {
            let (r, s) = (t.requester.index(), t.server.index());
            rows[r].requested += t.units;
            rows[r].received += t.granted;
            rows[s].served += t.granted;
            let q_r = t.units as f64 * delta;
            let q_a = t.granted as f64 * delta;
            let obs = RateObservation {
                requester: t.requester,
                server: t.server,
                q_r,
                q_w_hat: q_a,
                q_a,
                q_f: q_r,
                q_ay: q_r,
                iteration,
            };
            let requester = &mut self.nodes[r];
            requester.period_received += t.granted;
            if let Ok(obs) = validate_observation(obs, &requester.params) {
                if let Ok(sample) = reputation_sample(
                    &obs,
                    requester.params.eta,
                    requester.params.q_rd,
                    self.q_rd_universal,
                ) {
                    requester.table.record_transaction(
                        sample,
                        t.server,
                        iteration,
                        cfg.params.rep_smoothing,
                    );
                }
            }
            let answered = t.granted > 0;
            if cfg.workload.kind == WorkloadKind::Bandwidth && requester.ranked.contains(&t.server)
            {
                requester.ranked_tries += 1;
                requester.ranked_hits += u64::from(answered);
            }
            requester.stats.record(t.server, answered);
            self.nodes[s].stats.record(t.requester, answered);
        }

        // (4) periodic controllers
        let next = iteration + 1;
        if next.is_multiple_of(cfg.nu.window) {
            for node in &mut self.nodes {
                if use_reputation {
                    node.alloc.end_window(&cfg.nu);
                } else {
                    node.alloc.reset_window();
                }
            }
            self.refresh_interest(iteration);
        }
        if next.is_multiple_of(cfg.capacity.period) {
            for (i, node) in self.nodes.iter_mut().enumerate() {
                let received = std::mem::take(&mut node.period_received);
                let Some(ctl) = node.controller.as_mut() else {
                    continue;
                };
                let download = received as f64 * delta / cfg.capacity.period as f64;
                ctl.history.push_back(download);
                if ctl.history.len() > EPSILON_HISTORY {
                    ctl.history.pop_front();
                }
                let m = ctl.history.iter().sum::<f64>() / ctl.history.len() as f64;
                let var = ctl.history.iter().map(|d| (d - m).powi(2)).sum::<f64>()
                    / ctl.history.len() as f64;
                ctl.state.epsilon =
                    tune_epsilon(var, cfg.capacity.c_epsilon, cfg.capacity.epsilon_min);
                let action = ctl.state.review(download);
                node.shared = ctl.state.shared;
                node.alloc.shared_units = (node.shared / delta).floor() as u64;
                out.capacity.push(CapacityRow {
                    iteration,
                    node: NodeId::from(i),
                    review: ctl.state.reviews,
                    shared: node.shared,
                    action,
                    download,
                });
            }
        }
        if cfg.dump_interval > 0 && next.is_multiple_of(cfg.dump_interval) {
            for node in &self.nodes {
                out.reputation
                    .extend(
                        node.table
                            .dump()
                            .map(|(owner, peer, t, n_obs)| ReputationRow {
                                iteration,
                                owner,
                                peer,
                                t,
                                n_obs,
                            }),
                    );
                let owner = node.params.node;
                let cfg_i = node.interest;
                let known: BTreeSet<NodeId> =
                    node.stats.peers().chain(node.table.peers()).collect();
                for (rank, (peer, score)) in rank_servers(&node.stats, &node.table, &cfg_i, &known)
                    .into_iter()
                    .enumerate()
                {
                    out.neighbors.push(NeighborRow {
                        iteration,
                        owner,
                        rank,
                        peer,
                        score,
                    });
                }
            }
        }

        // (5) rows
        out.nodes = rows;
        out
    }

    fn refresh_interest(&mut self, iteration: u64) {
        let params = self.config.interest;
        for node in &mut self.nodes {
            if node.ranked_tries > 0 {
                let rate = node.ranked_hits as f64 / node.ranked_tries as f64;
                node.interest.base = adapt_base(node.interest.base, rate, &params);
            }
            node.ranked_tries = 0;
            node.ranked_hits = 0;
            let known: BTreeSet<NodeId> = node.stats.peers().chain(node.table.peers()).collect();
            let ranked: Vec<NodeId> =
                rank_servers(&node.stats, &node.table, &node.interest, &known)
                    .into_iter()
                    .map(|(id, _)| id)
                    .collect();
            let c = churn(&node.ranked, &ranked);
            node.interest.alpha = adapt_alpha(node.interest.alpha, iteration + 1, c, &params);
            node.ranked = ranked;
        }
    }
}

/// Builds the network and steps through every iteration.
pub fn run(config: &ScenarioConfig) -> Result<MetricsSeries, ScenarioError> {
    let mut sim = Simulation::build(config)?;
    let mut series = MetricsSeries::default();
    for it in 0..sim.config.iterations {
        let step = sim.step(it);
        series.nodes.extend(step.nodes);
        series.allocator.extend(step.allocator);
        series.capacity.extend(step.capacity);
        series.reputation.extend(step.reputation);
        series.neighbors.extend(step.neighbors);
    }
    Ok(series)
}
