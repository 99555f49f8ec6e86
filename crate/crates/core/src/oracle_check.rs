//! Self-check of the greedy allocator against exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocator::{allocate_capacity, objective, oracle, AllocationRequest};
use crate::model::NodeId;

pub const GAP_TOLERANCE: f64 = 1e-9;

/// Bounds on random instances. Keep them small: the reference search is
/// exponential in the number of requesters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleLimits {
    pub max_requesters: usize,
    pub max_demand: u64,
    pub max_capacity: u64,
    pub x: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_requesters: 4,
            max_demand: 8,
            max_capacity: 10,
            x: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub demands: Vec<u64>,
    pub capacity: u64,
}

impl Instance {
    pub fn random<R: Rng + ?Sized>(limits: &OracleLimits, rng: &mut R) -> Self {
        let n = rng.gen_range(1..=limits.max_requesters.max(1));
        Instance {
            demands: (0..n)
                .map(|_| rng.gen_range(1..=limits.max_demand.max(1)))
                .collect(),
            capacity: rng.gen_range(0..=limits.max_capacity),
        }
    }

    /// The instance's grant vector from the production allocator.
    pub fn greedy(&self, x: f64) -> Vec<u64> {
        let reqs: Vec<AllocationRequest> = self
            .demands
            .iter()
            .enumerate()
            .map(|(i, &d)| AllocationRequest {
                requester: NodeId::from(i),
                q_r_units: d,
                arrival: 0,
                t_eff: 1.0,
            })
            .collect();
        let grant = allocate_capacity(&reqs, self.capacity, x);
        (0..self.demands.len())
            .map(|i| grant.get(NodeId::from(i)))
            .collect()
    }

    /// Grants sum to `min(capacity, Σ demand)` and none exceeds its demand.
    pub fn feasible(&self, grants: &[u64]) -> bool {
        let target = self.capacity.min(self.demands.iter().sum());
        grants.len() == self.demands.len()
            && grants.iter().sum::<u64>() == target
            && grants.iter().zip(&self.demands).all(|(g, d)| g <= d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub max_gap: f64,
    pub infeasible: usize,
    /// Instance with the largest gap, if any trial ran.
    pub worst: Option<Instance>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_gap <= GAP_TOLERANCE && self.infeasible == 0
    }
}

/// Runs `trials` random instances through the greedy allocator.
pub fn oracle_check(limits: &OracleLimits, trials: usize, seed: u64) -> OracleReport {
    oracle_check_with(limits, trials, seed, |inst, x| inst.greedy(x))
}

/// As [`oracle_check`], with the allocator under test supplied by the
/// caller.
pub fn oracle_check_with(
    limits: &OracleLimits,
    trials: usize,
    seed: u64,
    allocator: impl Fn(&Instance, f64) -> Vec<u64>,
) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        trials,
        max_gap: 0.0,
        infeasible: 0,
        worst: None,
    };
    for _ in 0..trials {
        let inst = Instance::random(limits, &mut rng);
        let grants = allocator(&inst, limits.x);
        if !inst.feasible(&grants) {
            report.infeasible += 1;
        }
        let (_, best) = oracle::best_split(&inst.demands, inst.capacity, limits.x);
        let got = objective(
            grants.iter().copied().zip(inst.demands.iter().copied()),
            limits.x,
        );
        let gap = (best - got).abs();
        if report.worst.is_none() || gap > report.max_gap {
            report.max_gap = report.max_gap.max(gap);
            report.worst = Some(inst);
        }
    }
    report
}

/// Negative control: pours capacity into the first requester, then the
/// next. Feasible but far from optimal.
pub fn corrupted_greedy(inst: &Instance, _x: f64) -> Vec<u64> {
    let mut left = inst.capacity;
    inst.demands
        .iter()
        .map(|&d| {
            let g = d.min(left);
            left -= g;
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_passes() {
        let r = oracle_check(&OracleLimits::default(), 0, 1);
        assert!(r.passed());
        assert_eq!(r.trials, 0);
        assert!(r.worst.is_none());
    }

    #[test]
    fn greedy_matches_oracle() {
        let r = oracle_check(&OracleLimits::default(), 300, 7);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn corrupted_greedy_is_caught() {
        let r = oracle_check_with(&OracleLimits::default(), 300, 7, corrupted_greedy);
        assert!(!r.passed());
        assert!(r.max_gap > 0.1);
    }

    #[test]
    fn feasibility_rules() {
        let inst = Instance {
            demands: vec![2, 4],
            capacity: 4,
        };
        assert!(inst.feasible(&[2, 2]));
        assert!(!inst.feasible(&[3, 1]));
        assert!(!inst.feasible(&[1, 2]));
    }
}
