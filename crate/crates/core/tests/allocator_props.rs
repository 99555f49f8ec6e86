use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repshare::allocator::{
    adjust_nu, allocate_capacity, marginal_gain, objective, oracle, select_requesters,
    AllocationRequest, NuParams,
};
use repshare::NodeId;

const X: f64 = 0.75;

fn requests(demands: &[u64]) -> Vec<AllocationRequest> {
    demands
        .iter()
        .enumerate()
        .map(|(i, &d)| AllocationRequest {
            requester: NodeId::from(i),
            q_r_units: d,
            arrival: 0,
            t_eff: 1.0,
        })
        .collect()
}

fn grants(demands: &[u64], capacity: u64) -> Vec<u64> {
    let g = allocate_capacity(&requests(demands), capacity, X);
    (0..demands.len()).map(|i| g.get(NodeId::from(i))).collect()
}

fn instance() -> impl Strategy<Value = (Vec<u64>, u64)> {
    (prop::collection::vec(1u64..=8, 1..=4), 0u64..=10)
}

proptest! {
    #[test]
    fn grants_are_feasible((demands, cap) in instance()) {
        let g = grants(&demands, cap);
        let total: u64 = demands.iter().sum();
        prop_assert_eq!(g.iter().sum::<u64>(), cap.min(total));
        for (gi, di) in g.iter().zip(&demands) {
            prop_assert!(gi <= di);
        }
    }

    #[test]
    fn greedy_is_optimal((demands, cap) in instance()) {
        let g = grants(&demands, cap);
        let got = objective(g.iter().copied().zip(demands.iter().copied()), X);
        let (_, best) = oracle::best_split(&demands, cap, X);
        prop_assert!((best - got).abs() <= 1e-9, "greedy {got} vs best {best}");
    }

    #[test]
    fn inflating_demand_never_gains_useful_units(
        (demands, cap) in instance(),
        who in 0usize..4,
        extra in 1u64..=24,
    ) {
        let who = who % demands.len();
        let total: u64 = demands.iter().sum();
        prop_assume!(cap < total);
        let before = grants(&demands, cap)[who];
        let mut inflated = demands.clone();
        inflated[who] += extra;
        let after = grants(&inflated, cap)[who].min(demands[who]);
        prop_assert!(after <= before, "{before} -> {after}");
    }

    #[test]
    fn marginal_gains_decrease(k in 1u64..50, d in 1u64..50) {
        prop_assert!(marginal_gain(k + 1, d, X) < marginal_gain(k, d, X));
        prop_assert!(marginal_gain(k, d + 1, X) < marginal_gain(k, d, X));
        // Partial sums telescope to the objective term.
        let sum: f64 = (1..=k).map(|j| marginal_gain(j, d, X)).sum();
        prop_assert!((sum - (k as f64 / d as f64).powf(X)).abs() < 1e-12);
    }

    #[test]
    fn allocation_ignores_input_order((demands, cap) in instance(), rot in 0usize..4) {
        let mut reqs = requests(&demands);
        let expected = allocate_capacity(&reqs, cap, X);
        let r = rot % reqs.len();
        reqs.rotate_left(r);
        prop_assert_eq!(allocate_capacity(&reqs, cap, X), expected);
    }

    #[test]
    fn selection_is_reproducible(seed in any::<u64>(), t in prop::collection::vec(0.0..=1.0f64, 0..12), nu in 0.1..10.0f64) {
        let reqs: Vec<_> = t
            .iter()
            .enumerate()
            .map(|(i, &t_eff)| AllocationRequest { requester: NodeId::from(i), q_r_units: 1, arrival: 0, t_eff })
            .collect();
        let a = select_requesters(&reqs, X, nu, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = select_requesters(&reqs, X, nu, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&a, &b);
        // Zero reputation is never picked, t_eff^x·ν ≥ 1 always is.
        for r in &reqs {
            let picked = a.iter().any(|s| s.requester == r.requester);
            if r.t_eff == 0.0 {
                prop_assert!(!picked);
            }
            if r.t_eff.powf(X) * nu >= 1.0 {
                prop_assert!(picked);
            }
        }
    }

    #[test]
    fn nu_stays_in_bounds(nu in 0.1..=10.0f64, u in 0.0..=1.0f64, f in 0.0..=1.0f64) {
        let p = NuParams::default();
        let next = adjust_nu(nu, u, f, &p);
        prop_assert!((p.nu_min..=p.nu_max).contains(&next));
        if f < p.f_ok {
            prop_assert!(next <= nu);
        } else if u < p.u_low {
            prop_assert!(next >= nu);
        }
    }
}

// A fully served requester can still pull extra, unneeded units by
// inflating: {7, 1} at capacity 2 grants (1, 1), {7, 2} grants (0, 2).
#[test]
fn inflation_can_buy_surplus_units() {
    assert_eq!(grants(&[7, 1], 2), vec![1, 1]);
    assert_eq!(grants(&[7, 2], 2), vec![0, 2]);
}

#[test]
fn zero_capacity_grants_nothing() {
    assert_eq!(grants(&[3, 5], 0), vec![0, 0]);
    assert!(allocate_capacity(&[], 5, X).0.is_empty());
}
