use proptest::prelude::*;
use repshare::capacity::{next_action, Action, CapacityState};

/// Download observed when sharing `u`: rises with slope `slope` up to the
/// knee, flat beyond.
fn response(u: f64, knee: f64, slope: f64) -> f64 {
    slope * u.min(knee)
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        Just(Action::Decrease),
        Just(Action::Hold),
        Just(Action::Increase)
    ]
}

proptest! {
    #[test]
    fn each_review_moves_one_step(
        start in 0.0..200.0f64,
        delta in 0.5..10.0f64,
        downloads in prop::collection::vec(0.0..100.0f64, 1..40),
    ) {
        let mut st = CapacityState::new(start, delta, 1.0);
        for d in downloads {
            let before = st.shared;
            let a = st.review(d);
            let change = st.shared - before;
            let expected = delta * f64::from(a.sign());
            let clamped = st.shared == 0.0 && expected < 0.0;
            prop_assert!(st.shared >= 0.0);
            prop_assert!((change - expected).abs() < 1e-9 || clamped, "{change} vs {expected}");
        }
    }

    #[test]
    fn flat_downloads_after_a_cut_keep_cutting(d in 0.0..100.0f64, eps in 0.1..5.0f64) {
        prop_assert_eq!(next_action(d, d, Action::Decrease, Action::Decrease, eps), Action::Decrease);
    }

    #[test]
    fn significant_rise_means_increase(
        d in 0.0..100.0f64,
        eps in 0.1..5.0f64,
        last in action(),
        prev in action(),
    ) {
        prop_assert_eq!(next_action(d + 2.0 * eps, d, last, prev, eps), Action::Increase);
    }

    #[test]
    fn settles_near_knee(
        knee in 10.0..60.0f64,
        slope in 0.5..2.0f64,
        start_frac in 0.0..=3.0f64,
    ) {
        let since = settle_review(knee, slope, start_frac * knee, 2.0 * 5.0);
        prop_assert!(since <= 50, "settled only at review {since}");
    }

    #[test]
    fn settles_within_one_step_on_grid(
        knee_steps in 2u32..12,
        slope in 0.5..2.0f64,
        start_steps in 0u32..36,
    ) {
        let knee = 5.0 * f64::from(knee_steps);
        let since = settle_review(knee, slope, 5.0 * f64::from(start_steps), 5.0);
        prop_assert!(since <= 50, "settled only at review {since}");
    }
}

/// First review from which `U_s` stays within `band` of the knee through
/// review 150 (151 if it never settles). δ = 5, ε = 1.
fn settle_review(knee: f64, slope: f64, start: f64, band: f64) -> u32 {
    let mut st = CapacityState::new(start, 5.0, 1.0);
    let mut since = None;
    for k in 1..=150u32 {
        st.review(response(st.shared, knee, slope));
        if (st.shared - knee).abs() <= band + 1e-9 {
            since.get_or_insert(k);
        } else {
            since = None;
        }
    }
    since.unwrap_or(151)
}
