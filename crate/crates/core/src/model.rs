//! Shared vocabulary: node identities, per-transaction rate quantities and
//! the network-wide constants every other module reads.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque ordinal identity of a simulated node.
///
/// Ordering is total and is the tie-breaker everywhere a deterministic
/// order is needed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

/// The five rates observed for one transaction, in units per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateObservation {
    pub requester: NodeId,
    pub server: NodeId,
    /// Requested rate.
    pub q_r: f64,
    /// Rate the server was willing to provide.
    pub q_w_hat: f64,
    /// Rate actually delivered.
    pub q_a: f64,
    /// Feasible rate on the path.
    pub q_f: f64,
    /// Rate the requester accepted.
    pub q_ay: f64,
    pub iteration: u64,
}

/// Behaviour of a node when requesting and sharing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Requests exactly what it needs and shares its configured capacity.
    Honest,
    /// Requests but never shares.
    FreeRider,
    /// Inflates every request by `multiplier`.
    OverRequester { multiplier: f64 },
}

impl Strategy {
    /// Demand inflation factor applied to requests.
    pub fn multiplier(&self) -> f64 {
        match self {
            Strategy::OverRequester { multiplier } => *multiplier,
            _ => 1.0,
        }
    }

    pub fn shares(&self) -> bool {
        !matches!(self, Strategy::FreeRider)
    }
}

/// Network-wide constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalParams {
    /// Reputation exponent, in (0, 1].
    pub x: f64,
    /// Universal scaling capacity Q_rd. `None` resolves to the largest
    /// download capacity in the scenario.
    pub q_rd_universal: Option<f64>,
    /// Behaviour exponent η, in [0, 1).
    pub eta_default: f64,
    /// Exponential smoothing weight for reputation updates, in (0, 1].
    pub rep_smoothing: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        Self {
            x: 0.75,
            q_rd_universal: None,
            eta_default: 0.5,
            rep_smoothing: 0.3,
        }
    }
}

impl GlobalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.x > 0.0 && self.x <= 1.0) {
            return Err(ModelError::Param("x must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.eta_default) {
            return Err(ModelError::Param("eta_default must lie in [0, 1)"));
        }
        if !(self.rep_smoothing > 0.0 && self.rep_smoothing <= 1.0) {
            return Err(ModelError::Param("rep_smoothing must lie in (0, 1]"));
        }
        if let Some(q) = self.q_rd_universal {
            if !(q > 0.0) {
                return Err(ModelError::Param("q_rd_universal must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-node constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub node: NodeId,
    /// Download capacity q_rd.
    pub q_rd: f64,
    pub eta: f64,
    pub strategy: Strategy,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid observation: {0}")]
    Observation(&'static str),
    #[error("invalid parameter: {0}")]
    Param(&'static str),
}

/// Checks every [`RateObservation`] invariant against the requester's
/// download capacity. This is the only way observations enter the
/// reputation module in the simulator.
pub fn validate_observation(
    obs: RateObservation,
    requester: &NodeParams,
) -> Result<RateObservation, ModelError> {
    let rates = [obs.q_r, obs.q_w_hat, obs.q_a, obs.q_f, obs.q_ay];
    if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(ModelError::Observation(
            "rates must be finite and non-negative",
        ));
    }
    if obs.q_r <= 0.0 {
        return Err(ModelError::Observation("q_r must be positive"));
    }
    if obs.q_a > obs.q_ay.min(obs.q_f) {
        return Err(ModelError::Observation("q_a exceeds min(q_ay,q_f)"));
    }
    if obs.q_w_hat > obs.q_r {
        return Err(ModelError::Observation("q_w_hat exceeds q_r"));
    }
    if obs.q_r > requester.q_rd {
        return Err(ModelError::Observation("request exceeds download capacity"));
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q_rd: f64) -> NodeParams {
        NodeParams {
            node: NodeId(0),
            q_rd,
            eta: 0.5,
            strategy: Strategy::Honest,
        }
    }

    fn obs(q_r: f64, q_w_hat: f64, q_a: f64, q_f: f64, q_ay: f64) -> RateObservation {
        RateObservation {
            requester: NodeId(0),
            server: NodeId(1),
            q_r,
            q_w_hat,
            q_a,
            q_f,
            q_ay,
            iteration: 0,
        }
    }

    #[test]
    fn accepts_consistent_observation() {
        let o = obs(10.0, 8.0, 4.0, 9.0, 8.0);
        assert_eq!(validate_observation(o, &params(100.0)), Ok(o));
    }

    #[test]
    fn rejects_actual_above_accepted_or_feasible() {
        let o = obs(10.0, 8.0, 9.0, 9.0, 8.0);
        assert_eq!(
            validate_observation(o, &params(100.0)),
            Err(ModelError::Observation("q_a exceeds min(q_ay,q_f)"))
        );
    }

    #[test]
    fn rejects_request_above_download_capacity() {
        let o = obs(120.0, 8.0, 4.0, 9.0, 8.0);
        assert_eq!(
            validate_observation(o, &params(100.0)),
            Err(ModelError::Observation("request exceeds download capacity"))
        );
    }

    #[test]
    fn rejects_zero_request_and_negative_rates() {
        assert!(validate_observation(obs(0.0, 0.0, 0.0, 1.0, 1.0), &params(10.0)).is_err());
        assert!(validate_observation(obs(1.0, -0.1, 0.0, 1.0, 1.0), &params(10.0)).is_err());
        assert!(validate_observation(obs(1.0, 2.0, 0.0, 1.0, 1.0), &params(10.0)).is_err());
    }

    #[test]
    fn node_ids_order_numerically() {
        let mut ids = vec![NodeId(7), NodeId(3), NodeId(10)];
        ids.sort();
        assert_eq!(ids, vec![NodeId(3), NodeId(7), NodeId(10)]);
    }
}
