//! Interest-aware server ranking.
//!
//! Two nodes that keep answering each other's queries probably share
//! interests. The similarity coefficient grows with the answer ratio and,
//! logarithmically, with the number of exchanges until the count reaches
//! the node's `base`, after which only the answer ratio counts. Ranking
//! blends similarity with reputation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::NodeId;
use crate::reputation::ReputationTable;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeerStats {
    /// Queries and transfers exchanged, in either direction.
    pub omega: u64,
    pub answered: u64,
}

/// Per-owner interaction counts, indexed densely by peer id.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionStats {
    owner: NodeId,
    peers: Vec<PeerStats>,
}

impl InteractionStats {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            peers: Vec::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn record(&mut self, peer: NodeId, answered: bool) {
        let i = peer.index();
        if i >= self.peers.len() {
            self.peers.resize(i + 1, PeerStats::default());
        }
        let s = &mut self.peers[i];
        s.omega += 1;
        if answered {
            s.answered += 1;
        }
    }

    pub fn get(&self, peer: NodeId) -> PeerStats {
        self.peers.get(peer.index()).copied().unwrap_or_default()
    }

    /// Peers with at least one interaction, ascending.
    pub fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.peers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.omega > 0)
            .map(|(i, _)| NodeId::from(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterestParams {
    pub base: f64,
    pub base_min: f64,
    pub base_growth: f64,
    pub r_ok: f64,
    pub r_high: f64,
    pub alpha_high: f64,
    pub alpha_low: f64,
    /// Multiplicative decay of `alpha - alpha_low` per stable period.
    pub alpha_decay: f64,
    /// Iterations before a node may consider its neighbourhood stable.
    pub warmup: u64,
    /// Fraction of the ranked set replaced since the last period above
    /// which the neighbourhood counts as unstable.
    pub churn_threshold: f64,
    pub neighbor_count: usize,
}

impl Default for InterestParams {
    fn default() -> Self {
        Self {
            base: 10.0,
            base_min: 2.0,
            base_growth: 2.0,
            r_ok: 0.5,
            r_high: 0.9,
            alpha_high: 0.8,
            alpha_low: 0.2,
            alpha_decay: 0.95,
            warmup: 50,
            churn_threshold: 0.5,
            neighbor_count: 20,
        }
    }
}

/// Mutable per-node knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterestConfig {
    pub base: f64,
    pub alpha: f64,
    pub neighbor_count: usize,
}

impl InterestConfig {
    pub fn from_params(p: &InterestParams) -> Self {
        Self {
            base: p.base,
            alpha: p.alpha_high,
            neighbor_count: p.neighbor_count,
        }
    }
}

/// `v · min(1, log_base(Ω + 1))` while `Ω < base`, `v` afterwards, with
/// `v = answered / Ω` (0 without interactions).
pub fn similarity(omega: u64, answered: u64, base: f64) -> f64 {
    if omega == 0 {
        return 0.0;
    }
    let v = answered as f64 / omega as f64;
    let o = omega as f64;
    if o < base {
        v * ((o + 1.0).ln() / base.ln()).min(1.0)
    } else {
        v
    }
}

/// `α · χ + (1 − α) · t`.
pub fn combined_score(chi: f64, t: f64, alpha: f64) -> f64 {
    alpha * chi + (1.0 - alpha) * t
}

/// Candidates ordered by combined score (descending, `NodeId` ascending on
/// ties), truncated to `config.neighbor_count`.
pub fn rank_servers(
    stats: &InteractionStats,
    reputations: &ReputationTable,
    config: &InterestConfig,
    candidates: &BTreeSet<NodeId>,
) -> Vec<(NodeId, f64)> {
    let mut scored: Vec<(NodeId, f64)> = candidates
        .iter()
        .filter(|&&c| c != stats.owner())
        .map(|&c| {
            let s = stats.get(c);
            let chi = similarity(s.omega, s.answered, config.base);
            let t = reputations.score(c).unwrap_or(0.0);
            (c, combined_score(chi, t, config.alpha))
        })
        .collect();
    let order =
        |a: &(NodeId, f64), b: &(NodeId, f64)| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0));
    let k = config.neighbor_count;
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    scored
}

/// Grows `base` when ranked neighbours answer too few queries, shrinks it
/// (down to `base_min`) when they answer nearly everything.
pub fn adapt_base(base: f64, answer_rate: f64, params: &InterestParams) -> f64 {
    if answer_rate < params.r_ok {
        base * params.base_growth
    } else if answer_rate > params.r_high {
        (base / params.base_growth).max(params.base_min)
    } else {
        base
    }
}

/// `alpha_high` for newcomers and unstable neighbourhoods; otherwise
/// decays geometrically toward `alpha_low`.
pub fn adapt_alpha(alpha: f64, network_age: u64, churn: f64, params: &InterestParams) -> f64 {
    if network_age < params.warmup || churn >= params.churn_threshold {
        params.alpha_high
    } else {
        params.alpha_low + (alpha - params.alpha_low) * params.alpha_decay
    }
}

/// Fraction of `current` not present in `previous`.
pub fn churn(previous: &[NodeId], current: &[NodeId]) -> f64 {
    if current.is_empty() {
        return 0.0;
    }
    let prev: BTreeSet<_> = previous.iter().collect();
    let fresh = current.iter().filter(|c| !prev.contains(c)).count();
    fresh as f64 / current.len() as f64
}
