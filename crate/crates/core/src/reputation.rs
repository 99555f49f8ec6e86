//! Direct-observation reputation.
//!
//! A requester scores each transaction with
//!
//! ```text
//! t = (q_a / min(q_ay, q_f))^(1-η) · (q_w_hat / q_r) · (q_r / q_rd) · (q_rd / Q_rd)
//! ```
//!
//! where `q_rd` is the requester's own download capacity and `Q_rd` the
//! network-wide scale. The last two factors weight a transaction by the
//! size of the request and bring every table onto a common [0, 1] scale.
//! Samples are folded into a per-peer exponentially smoothed score.
//!
//! When serving, a node rescales the stored score by the ratio of its own
//! download capacity to the size of the incoming request
//! ([`effective_reputation`]), so small requests are favoured.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{NodeId, RateObservation};

#[derive(Debug, Error, PartialEq)]
pub enum ReputationError {
    #[error("degenerate transaction: {0} is zero")]
    Degenerate(&'static str),
    #[error("universal scale {universal} is below owner capacity {owner}")]
    ScaleBelowCapacity { universal: f64, owner: f64 },
    #[error("request size must be positive")]
    ZeroRequest,
}

/// Reputation earned by a single transaction, in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ReputationSample(f64);

impl ReputationSample {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Scores one validated observation from the requester's point of view.
///
/// `q_rd` is the requester's download capacity and `q_rd_universal` the
/// shared scale `Q_rd`. A transaction with `min(q_ay, q_f) = 0` or
/// `q_r = 0` carries no information and is reported as
/// [`ReputationError::Degenerate`]; callers skip it.
pub fn reputation_sample(
    obs: &RateObservation,
    eta: f64,
    q_rd: f64,
    q_rd_universal: f64,
) -> Result<ReputationSample, ReputationError> {
    let cap = obs.q_ay.min(obs.q_f);
    if cap <= 0.0 {
        return Err(ReputationError::Degenerate("min(q_ay, q_f)"));
    }
    if obs.q_r <= 0.0 {
        return Err(ReputationError::Degenerate("q_r"));
    }
    if q_rd_universal < q_rd {
        return Err(ReputationError::ScaleBelowCapacity {
            universal: q_rd_universal,
            owner: q_rd,
        });
    }
    let delivery = (obs.q_a / cap).powf(1.0 - eta);
    let willingness = obs.q_w_hat / obs.q_r;
    let t = delivery * willingness * (obs.q_r / q_rd) * (q_rd / q_rd_universal);
    Ok(ReputationSample(t))
}

/// Same score with the capacity factors cancelled: `(q_r / Q_rd)`
/// replaces `(q_r / q_rd) · (q_rd / Q_rd)`.
pub fn reputation_sample_collapsed(
    obs: &RateObservation,
    eta: f64,
    q_rd_universal: f64,
) -> Result<ReputationSample, ReputationError> {
    let cap = obs.q_ay.min(obs.q_f);
    if cap <= 0.0 {
        return Err(ReputationError::Degenerate("min(q_ay, q_f)"));
    }
    if obs.q_r <= 0.0 {
        return Err(ReputationError::Degenerate("q_r"));
    }
    let t = (obs.q_a / cap).powf(1.0 - eta) * (obs.q_w_hat / obs.q_r) * (obs.q_r / q_rd_universal);
    Ok(ReputationSample(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReputationEntry {
    /// Smoothed score.
    pub t: f64,
    pub last_update: u64,
    pub n_obs: u64,
}

/// One node's view of its peers. Peers without an entry are newcomers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationTable {
    owner: NodeId,
    entries: BTreeMap<NodeId, ReputationEntry>,
}

impl ReputationTable {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn get(&self, peer: NodeId) -> Option<&ReputationEntry> {
        self.entries.get(&peer)
    }

    pub fn score(&self, peer: NodeId) -> Option<f64> {
        self.entries.get(&peer).map(|e| e.t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    /// Folds a sample into the peer's score: a new peer starts at the
    /// sample, an existing one moves by `beta` toward it.
    pub fn record_transaction(
        &mut self,
        sample: ReputationSample,
        peer: NodeId,
        iteration: u64,
        beta: f64,
    ) {
        let s = sample.value();
        self.entries
            .entry(peer)
            .and_modify(|e| {
                e.t = (1.0 - beta) * e.t + beta * s;
                e.n_obs += 1;
                e.last_update = iteration;
            })
            .or_insert(ReputationEntry {
                t: s,
                last_update: iteration,
                n_obs: 1,
            });
    }

    /// `(owner, peer, t, n_obs)` rows in peer order.
    pub fn dump(&self) -> impl Iterator<Item = (NodeId, NodeId, f64, u64)> + '_ {
        self.entries
            .iter()
            .map(move |(p, e)| (self.owner, *p, e.t, e.n_obs))
    }
}

/// Stored score (or `t_newcomer` for an unknown peer) scaled by
/// `q_rd_owner / q_r_req`. Not clamped: values above 1 are legal and the
/// allocator clamps the resulting probability.
pub fn effective_reputation(
    table: &ReputationTable,
    peer: NodeId,
    q_r_req: f64,
    q_rd_owner: f64,
    t_newcomer: f64,
) -> Result<f64, ReputationError> {
    if q_r_req <= 0.0 {
        return Err(ReputationError::ZeroRequest);
    }
    let t = table.score(peer).unwrap_or(t_newcomer);
    Ok(t * q_rd_owner / q_r_req)
}
