//! A serving node's round: who gets picked, and how the shared capacity is
//! split among the picked requesters.
//!
//! Selection is probabilistic. A requester with effective reputation
//! `t_eff` is picked with probability `min(1, t_eff^x · ν)`, so even a
//! poorly rated peer keeps a finite chance of service. `ν` is steered so
//! that picked demand stays close to the shared capacity.
//!
//! When the picked demand exceeds capacity, units go to the requesters
//! with the largest marginal gain of `Σ_j (g_j / d_j)^x`. For `x ≤ 1` the
//! objective is separable and concave, so taking the top marginal-gain
//! entries of the allocation array is exact. Small demands win the first
//! units, which is what makes inflating a request pointless.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::NodeId;

/// One pending request at a server, in allocation units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRequest {
    pub requester: NodeId,
    pub q_r_units: u64,
    pub arrival: u64,
    /// Effective reputation of the requester when the request arrived.
    pub t_eff: f64,
}

/// Canonical pending order: `t_eff` descending, then `NodeId` ascending.
pub fn canonical_cmp(a: &AllocationRequest, b: &AllocationRequest) -> Ordering {
    b.t_eff
        .total_cmp(&a.t_eff)
        .then_with(|| a.requester.cmp(&b.requester))
}

pub fn sort_canonical(pending: &mut [AllocationRequest]) {
    pending.sort_by(canonical_cmp);
}

/// `min(1, t_eff^x · ν)`.
pub fn selection_probability(t_eff: f64, x: f64, nu: f64) -> f64 {
    if t_eff <= 0.0 {
        return 0.0;
    }
    (t_eff.powf(x) * nu).min(1.0)
}

/// Keeps each request independently with its selection probability.
///
/// One uniform draw in (0, 1] is consumed per request, in the order given,
/// and the request is kept when the draw is at most its probability. The
/// caller passes `pending` in canonical order; that order is part of the
/// determinism contract.
pub fn select_requesters<R: Rng + ?Sized>(
    pending: &[AllocationRequest],
    x: f64,
    nu: f64,
    rng: &mut R,
) -> Vec<AllocationRequest> {
    pending
        .iter()
        .filter(|req| {
            let draw = 1.0 - rng.gen::<f64>();
            draw <= selection_probability(req.t_eff, x, nu)
        })
        .copied()
        .collect()
}

/// Units granted to each selected requester.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllocationGrant(pub BTreeMap<NodeId, u64>);

impl AllocationGrant {
    pub fn get(&self, node: NodeId) -> u64 {
        self.0.get(&node).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

/// Entry `(k, j)` of the allocation array for a requester demanding
/// `demand_units`: `(k^x − (k−1)^x) · (1 / demand_units)^x`.
pub fn marginal_gain(k: u64, demand_units: u64, x: f64) -> f64 {
    debug_assert!(k >= 1 && demand_units >= 1);
    let k = k as f64;
    (k.powf(x) - (k - 1.0).powf(x)) * (1.0 / demand_units as f64).powf(x)
}

/// `Σ_j (g_j / d_j)^x` over the given `(grant, demand)` pairs.
pub fn objective(pairs: impl IntoIterator<Item = (u64, u64)>, x: f64) -> f64 {
    pairs
        .into_iter()
        .map(|(g, d)| (g as f64 / d as f64).powf(x))
        .sum()
}

#[derive(Debug, PartialEq)]
struct Candidate {
    gain: f64,
    demand: u64,
    requester: NodeId,
    k: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap order: larger gain, then smaller demand, then smaller id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| Reverse(self.demand).cmp(&Reverse(other.demand)))
            .then_with(|| Reverse(self.requester).cmp(&Reverse(other.requester)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Splits `capacity_units` among `selected`.
///
/// Under-demand: everyone gets its full request. Otherwise the top
/// `capacity_units` entries of the allocation array are granted, ties going
/// to the smaller demand and then to the smaller `NodeId`. Requests from
/// the same requester are merged first.
pub fn allocate_capacity(
    selected: &[AllocationRequest],
    capacity_units: u64,
    x: f64,
) -> AllocationGrant {
    let mut demands: BTreeMap<NodeId, u64> = BTreeMap::new();
    for req in selected.iter().filter(|r| r.q_r_units > 0) {
        *demands.entry(req.requester).or_default() += req.q_r_units;
    }
    let total: u64 = demands.values().sum();
    if total <= capacity_units {
        return AllocationGrant(demands);
    }

    let mut grant: BTreeMap<NodeId, u64> = demands.keys().map(|&id| (id, 0)).collect();
    let mut heap: BinaryHeap<Candidate> = demands
        .iter()
        .map(|(&requester, &demand)| Candidate {
            gain: marginal_gain(1, demand, x),
            demand,
            requester,
            k: 1,
        })
        .collect();

    let mut left = capacity_units;
    while left > 0 {
        let Some(top) = heap.pop() else { break };
        *grant.get_mut(&top.requester).expect("seeded above") += 1;
        left -= 1;
        if top.k < top.demand {
            heap.push(Candidate {
                gain: marginal_gain(top.k + 1, top.demand, x),
                k: top.k + 1,
                ..top
            });
        }
    }
    AllocationGrant(grant)
}

/// Constants of the ν controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuParams {
    /// Iterations between adjustments.
    pub window: u64,
    pub u_low: f64,
    pub f_ok: f64,
    pub g_up: f64,
    pub g_down: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub nu_initial: f64,
}

impl Default for NuParams {
    fn default() -> Self {
        Self {
            window: 10,
            u_low: 0.9,
            f_ok: 0.9,
            g_up: 1.1,
            g_down: 0.9,
            nu_min: 0.1,
            nu_max: 10.0,
            nu_initial: 1.0,
        }
    }
}

/// Raises ν when capacity sits idle and picked demand is met, lowers it
/// when picked demand goes unmet.
pub fn adjust_nu(nu: f64, utilization: f64, fulfillment: f64, params: &NuParams) -> f64 {
    let next = if fulfillment < params.f_ok {
        nu * params.g_down
    } else if utilization < params.u_low {
        nu * params.g_up
    } else {
        nu
    };
    next.clamp(params.nu_min, params.nu_max)
}

/// Serve now when the running sum of `t_eff` over `pending` (canonical
/// order) reaches `theta`, or when the oldest request has waited `tau`.
pub fn serving_trigger(
    pending: &[AllocationRequest],
    theta: f64,
    oldest_wait: u64,
    tau: u64,
) -> bool {
    if pending.is_empty() {
        return false;
    }
    if oldest_wait >= tau {
        return true;
    }
    let mut sum = 0.0;
    for req in pending {
        sum += req.t_eff;
        if sum >= theta {
            return true;
        }
    }
    false
}

/// Batch-serving constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServingParams {
    /// Threshold on summed effective reputation.
    pub theta: f64,
    /// Longest a request waits before the batch is served regardless.
    pub tau: u64,
    /// Size of one allocation unit, in rate units.
    pub delta_units: f64,
}

impl Default for ServingParams {
    fn default() -> Self {
        Self {
            theta: 1.0,
            tau: 3,
            delta_units: 1.0,
        }
    }
}

/// Per-node allocator state.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorState {
    pub nu: f64,
    pub shared_units: u64,
    pending: Vec<AllocationRequest>,
    /// Capacity of the iterations the current queue has been waiting.
    banked_units: u64,
    granted_in_window: u64,
    offered_in_window: u64,
    picked_demand_in_window: u64,
    picked_granted_in_window: u64,
}

/// Outcome of one served batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedBatch {
    pub pending: Vec<AllocationRequest>,
    pub selected: Vec<AllocationRequest>,
    pub grant: AllocationGrant,
}

impl AllocatorState {
    pub fn new(nu: f64, shared_units: u64) -> Self {
        Self {
            nu,
            shared_units,
            pending: Vec::new(),
            banked_units: 0,
            granted_in_window: 0,
            offered_in_window: 0,
            picked_demand_in_window: 0,
            picked_granted_in_window: 0,
        }
    }

    pub fn pending(&self) -> &[AllocationRequest] {
        &self.pending
    }

    /// Adds a request, merging with one already pending from the same
    /// requester. The merged request keeps the earliest arrival and takes
    /// the effective reputation of the combined size from `rescore`.
    pub fn enqueue(&mut self, req: AllocationRequest, rescore: impl FnOnce(u64) -> f64) {
        if let Some(existing) = self
            .pending
            .iter_mut()
            .find(|p| p.requester == req.requester)
        {
            existing.q_r_units += req.q_r_units;
            existing.arrival = existing.arrival.min(req.arrival);
            existing.t_eff = rescore(existing.q_r_units);
        } else {
            self.pending.push(req);
        }
        sort_canonical(&mut self.pending);
    }

    pub fn oldest_wait(&self, now: u64) -> u64 {
        self.pending
            .iter()
            .map(|r| now.saturating_sub(r.arrival))
            .max()
            .unwrap_or(0)
    }

    pub fn should_serve(&self, now: u64, params: &ServingParams) -> bool {
        serving_trigger(
            &self.pending,
            params.theta,
            self.oldest_wait(now),
            params.tau,
        )
    }

    pub fn banked_units(&self) -> u64 {
        self.banked_units
    }

    /// Drains the queue and serves it from the banked capacity. With
    /// `use_reputation` false every pending request is selected and only
    /// capacity limits the grant.
    pub fn serve<R: Rng + ?Sized>(
        &mut self,
        x: f64,
        use_reputation: bool,
        rng: &mut R,
    ) -> ServedBatch {
        let pending = std::mem::take(&mut self.pending);
        let selected = if use_reputation {
            select_requesters(&pending, x, self.nu, rng)
        } else {
            pending.clone()
        };
        let grant = allocate_capacity(&selected, self.banked_units, x);
        self.banked_units = 0;
        let picked: u64 = selected.iter().map(|r| r.q_r_units).sum();
        self.granted_in_window += grant.total();
        self.picked_demand_in_window += picked;
        self.picked_granted_in_window += grant.total();
        ServedBatch {
            pending,
            selected,
            grant,
        }
    }

    /// Accounts for one iteration of capacity. Call after the iteration's
    /// arrivals are enqueued and before serving: capacity is banked while
    /// requests wait and lost while the queue is empty.
    pub fn tick(&mut self) {
        self.offered_in_window += self.shared_units;
        if self.pending.is_empty() {
            self.banked_units = 0;
        } else {
            self.banked_units += self.shared_units;
        }
    }

    /// Utilization and fulfilment since the last adjustment. An idle server
    /// with nothing to offer counts as fully utilized, and a window without
    /// picked demand counts as fully fulfilled.
    pub fn window_ratios(&self) -> (f64, f64) {
        let utilization = if self.offered_in_window == 0 {
            1.0
        } else {
            (self.granted_in_window as f64 / self.offered_in_window as f64).min(1.0)
        };
        let fulfillment = if self.picked_demand_in_window == 0 {
            1.0
        } else {
            self.picked_granted_in_window as f64 / self.picked_demand_in_window as f64
        };
        (utilization, fulfillment)
    }

    /// Applies [`adjust_nu`] to the window ratios and opens a new window.
    pub fn end_window(&mut self, params: &NuParams) -> (f64, f64) {
        let (u, f) = self.window_ratios();
        self.nu = adjust_nu(self.nu, u, f, params);
        self.reset_window();
        (u, f)
    }

    /// Opens a new window without touching ν.
    pub fn reset_window(&mut self) {
        self.granted_in_window = 0;
        self.offered_in_window = 0;
        self.picked_demand_in_window = 0;
        self.picked_granted_in_window = 0;
    }
}

/// Exhaustive reference optimizer for small instances.
pub mod oracle {
    use super::objective;

    /// Best integer grant vector by enumeration: maximizes
    /// `Σ (g_j / d_j)^x` subject to `Σ g_j = min(capacity, Σ d_j)` and
    /// `0 ≤ g_j ≤ d_j`. Returns the grants and the objective.
    pub fn best_split(demands: &[u64], capacity: u64, x: f64) -> (Vec<u64>, f64) {
        let target = capacity.min(demands.iter().sum());
        let mut current = vec![0u64; demands.len()];
        let mut best = (vec![0u64; demands.len()], f64::NEG_INFINITY);
        search(demands, target, x, 0, &mut current, &mut best);
        best
    }

    fn search(
        demands: &[u64],
        left: u64,
        x: f64,
        idx: usize,
        current: &mut Vec<u64>,
        best: &mut (Vec<u64>, f64),
    ) {
        if idx == demands.len() {
            if left == 0 {
                let value = objective(current.iter().copied().zip(demands.iter().copied()), x);
                if value > best.1 {
                    *best = (current.clone(), value);
                }
            }
            return;
        }
        let remaining_cap: u64 = demands[idx + 1..].iter().sum();
        for g in 0..=demands[idx].min(left) {
            if left - g > remaining_cap {
                continue;
            }
            current[idx] = g;
            search(demands, left - g, x, idx + 1, current, best);
        }
        current[idx] = 0;
    }
}
