//! Measurement records produced by the engine.

use crate::capacity::Action;
use crate::model::NodeId;

/// What one node did in one iteration. Units are allocation units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeRow {
    pub iteration: u64,
    pub node: NodeId,
    pub group: String,
    /// Fresh demand generated this iteration.
    pub need: u64,
    /// Units of this node's requests decided (granted or refused) this
    /// iteration.
    pub requested: u64,
    pub received: u64,
    pub served: u64,
    pub queries: u64,
    pub resolved: u64,
    /// Probes spent on the resolved queries.
    pub probes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorRow {
    pub iteration: u64,
    pub node: NodeId,
    pub pending: usize,
    pub selected: usize,
    pub granted: u64,
    pub utilization: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRow {
    pub iteration: u64,
    pub node: NodeId,
    pub review: u64,
    pub shared: f64,
    pub action: Action,
    pub download: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReputationRow {
    pub iteration: u64,
    pub owner: NodeId,
    pub peer: NodeId,
    pub t: f64,
    pub n_obs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRow {
    pub iteration: u64,
    pub owner: NodeId,
    pub rank: usize,
    pub peer: NodeId,
    pub score: f64,
}

/// Everything one run measured, in emission order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSeries {
    pub nodes: Vec<NodeRow>,
    pub allocator: Vec<AllocatorRow>,
    pub capacity: Vec<CapacityRow>,
    pub reputation: Vec<ReputationRow>,
    pub neighbors: Vec<NeighborRow>,
}

impl MetricsSeries {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Mean of `f` over node rows matching `keep`; `None` when none match.
    pub fn mean_over(
        &self,
        keep: impl Fn(&NodeRow) -> bool,
        f: impl Fn(&NodeRow) -> f64,
    ) -> Option<f64> {
        let (sum, n) = self
            .nodes
            .iter()
            .filter(|r| keep(r))
            .fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}
