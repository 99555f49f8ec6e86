use std::collections::BTreeSet;

use proptest::prelude::*;
use repshare::interest::{
    adapt_alpha, adapt_base, combined_score, rank_servers, similarity, InteractionStats,
    InterestConfig, InterestParams,
};
use repshare::reputation::{reputation_sample, ReputationTable};
use repshare::{NodeId, RateObservation};

fn table(owner: u32, scores: &[(u32, f64)]) -> ReputationTable {
    let mut t = ReputationTable::new(NodeId(owner));
    for &(peer, s) in scores {
        let obs = RateObservation {
            requester: NodeId(owner),
            server: NodeId(peer),
            q_r: s * 100.0 + 1e-9,
            q_w_hat: s * 100.0 + 1e-9,
            q_a: 1.0,
            q_f: 1.0,
            q_ay: 1.0,
            iteration: 0,
        };
        t.record_transaction(
            reputation_sample(&obs, 0.5, 100.0, 101.0).unwrap(),
            NodeId(peer),
            0,
            1.0,
        );
    }
    t
}

/// Peers 1..=n with random interaction counts and reputations.
fn network() -> impl Strategy<Value = Vec<(u64, u64, f64)>> {
    prop::collection::vec((0u64..40, 0.0..=1.0f64, 0.0..=1.0f64), 1..30).prop_map(|v| {
        v.into_iter()
            .map(|(omega, frac, t)| (omega, (omega as f64 * frac).floor() as u64, t))
            .collect()
    })
}

proptest! {
    #[test]
    fn similarity_bounded(omega in 0u64..1000, frac in 0.0..=1.0f64, base in 1.5..100.0f64) {
        let answered = (omega as f64 * frac).floor() as u64;
        let chi = similarity(omega, answered, base);
        prop_assert!((0.0..=1.0).contains(&chi));
    }

    #[test]
    fn similarity_grows_with_answers(omega in 1u64..200, a in 0u64..200, base in 1.5..100.0f64) {
        let a = a.min(omega - 1);
        prop_assert!(similarity(omega, a + 1, base) > similarity(omega, a, base));
    }

    #[test]
    fn similarity_grows_with_history_at_fixed_ratio(k in 1u64..50, base in 1.5..100.0f64) {
        // Same answer ratio (1/2), more exchanges.
        prop_assert!(similarity(2 * (k + 1), k + 1, base) >= similarity(2 * k, k, base));
    }

    #[test]
    fn score_is_monotone(chi in 0.0..=1.0f64, t in 0.0..=1.0f64, bump in 0.0..=1.0f64, alpha in 0.0..=1.0f64) {
        let s = combined_score(chi, t, alpha);
        prop_assert!(combined_score((chi + bump).min(1.0), t, alpha) >= s);
        prop_assert!(combined_score(chi, (t + bump).min(1.0), alpha) >= s);
    }

    #[test]
    fn ranking_is_the_top_k(peers in network(), k in 0usize..12, alpha in 0.0..=1.0f64, base in 2.0..20.0f64) {
        let owner = NodeId(0);
        let mut stats = InteractionStats::new(owner);
        let mut reps = Vec::new();
        for (i, &(omega, answered, t)) in peers.iter().enumerate() {
            let id = NodeId(i as u32 + 1);
            for j in 0..omega {
                stats.record(id, j < answered);
            }
            reps.push((id.0, t));
        }
        let reps = table(0, &reps);
        let candidates: BTreeSet<NodeId> = (0..=peers.len() as u32).map(NodeId).collect();
        let cfg = InterestConfig { base, alpha, neighbor_count: k };
        let ranked = rank_servers(&stats, &reps, &cfg, &candidates);

        // Oracle: score everyone, full sort, truncate.
        let mut all: Vec<(NodeId, f64)> = candidates
            .iter()
            .filter(|&&c| c != owner)
            .map(|&c| {
                let s = stats.get(c);
                let chi = similarity(s.omega, s.answered, base);
                (c, alpha * chi + (1.0 - alpha) * reps.score(c).unwrap_or(0.0))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(ranked, all);
    }

    #[test]
    fn base_stays_above_floor(base in 2.0..1000.0f64, rates in prop::collection::vec(0.0..=1.0f64, 1..50)) {
        let p = InterestParams::default();
        let mut b = base;
        for r in rates {
            b = adapt_base(b, r, &p);
            prop_assert!(b >= p.base_min);
        }
    }

    #[test]
    fn alpha_stays_in_range(steps in prop::collection::vec((0u64..200, 0.0..=1.0f64), 1..80)) {
        let p = InterestParams::default();
        let mut a = p.alpha_high;
        for (age, churn) in steps {
            a = adapt_alpha(a, age, churn, &p);
            prop_assert!(a >= p.alpha_low && a <= p.alpha_high);
        }
    }
}
