//! Self-tuning of a node's shared upload capacity.
//!
//! Every review period the node compares its average download with the
//! previous period's and nudges the shared capacity by `±δ` (or holds):
//!
//! 1. a cut that did not hurt downloads is followed by another cut;
//! 2. a raise that helped is followed by another raise;
//! 3. a cut that hurt, right after a raise, is undone;
//! 4. a raise that did not help, right after a cut, means the optimum was
//!    just found, so the node holds.
//!
//! The review judges the action that was in effect while `D_k` was being
//! measured, then applies the next one.

use serde::{Deserialize, Serialize};

/// Direction of the capacity change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Decrease,
    Hold,
    Increase,
}

impl Action {
    pub fn sign(self) -> i8 {
        match self {
            Action::Decrease => -1,
            Action::Hold => 0,
            Action::Increase => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityParams {
    /// Step `δ` as a fraction of download capacity.
    pub delta_fraction: f64,
    /// Review period `T`, in iterations.
    pub period: u64,
    pub epsilon_min: f64,
    pub c_epsilon: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        Self {
            delta_fraction: 0.05,
            period: 10,
            epsilon_min: 1.0,
            c_epsilon: 1.0,
        }
    }
}

/// Controller state for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityState {
    /// Shared capacity `U_s`, never negative.
    pub shared: f64,
    /// Action that produced the current `shared`.
    pub last_action: Action,
    /// The action before that.
    pub prev_action: Action,
    /// Average download in the previous review period.
    pub prev_download: Option<f64>,
    pub delta: f64,
    pub epsilon: f64,
    pub reviews: u64,
}

/// Starting capacity: the perceived demand when the node has one,
/// otherwise half its download capacity.
pub fn initial_capacity(perceived_demand: Option<f64>, download_capacity: f64) -> f64 {
    perceived_demand.unwrap_or(download_capacity / 2.0)
}

/// Significance threshold from the variance of per-period downloads:
/// `c_ε · sqrt(variance)`, floored at `ε_min`.
pub fn tune_epsilon(demand_variance: f64, c_epsilon: f64, epsilon_min: f64) -> f64 {
    (c_epsilon * demand_variance.max(0.0).sqrt()).max(epsilon_min)
}

/// Next action from the last two actions and the last two downloads.
pub fn next_action(
    download: f64,
    prev_download: f64,
    last: Action,
    prev: Action,
    epsilon: f64,
) -> Action {
    use Action::*;
    let insignificant = (download - prev_download).abs() <= epsilon;
    if insignificant {
        if last == prev || last == Hold {
            return Decrease;
        }
        if last == Increase && prev == Decrease {
            return Hold;
        }
    } else {
        if last == Decrease && prev == Increase && download < prev_download {
            return Increase;
        }
        if download > prev_download {
            return Increase;
        }
        // A significant drop right after a cut: undo it.
        if last == Decrease {
            return Increase;
        }
    }
    Hold
}

impl CapacityState {
    pub fn new(shared: f64, delta: f64, epsilon: f64) -> Self {
        Self {
            shared: shared.max(0.0),
            last_action: Action::Decrease,
            prev_action: Action::Decrease,
            prev_download: None,
            delta,
            epsilon,
            reviews: 0,
        }
    }

    /// One review with the average download `download` measured over the
    /// period just ended. Returns the action applied.
    pub fn review(&mut self, download: f64) -> Action {
        let mut next = match self.prev_download {
            None => Action::Decrease,
            Some(prev) => next_action(
                download,
                prev,
                self.last_action,
                self.prev_action,
                self.epsilon,
            ),
        };
        // Nothing left to cut.
        if next == Action::Decrease && self.shared <= 0.0 {
            next = Action::Increase;
        }
        self.shared = (self.shared + self.delta * f64::from(next.sign())).max(0.0);
        self.prev_action = self.last_action;
        self.last_action = next;
        self.prev_download = Some(download);
        self.reviews += 1;
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::*;

    #[test]
    fn initial_capacity_rule() {
        assert_eq!(initial_capacity(Some(30.0), 100.0), 30.0);
        assert_eq!(initial_capacity(None, 100.0), 50.0);
        assert_eq!(initial_capacity(None, 7.0), 3.5);
    }

    #[test]
    fn epsilon_rule() {
        assert_eq!(tune_epsilon(0.0, 1.0, 1.0), 1.0);
        assert_eq!(tune_epsilon(4.0, 1.0, 1.0), 2.0);
        assert_eq!(tune_epsilon(100.0, 0.5, 1.0), 5.0);
    }

    // Rule 1: a cut that did not change downloads is repeated.
    #[test]
    fn harmless_cut_continues() {
        assert_eq!(next_action(10.0, 10.2, Decrease, Decrease, 1.0), Decrease);
        assert_eq!(next_action(10.0, 10.2, Hold, Increase, 1.0), Decrease);
    }

    // Rule 2: a raise that paid off is repeated.
    #[test]
    fn profitable_raise_continues() {
        assert_eq!(next_action(15.0, 10.0, Increase, Increase, 1.0), Increase);
        assert_eq!(next_action(15.0, 10.0, Decrease, Decrease, 1.0), Increase);
    }

    // Rule 3: a cut that hurt after a raise is undone.
    #[test]
    fn harmful_cut_after_raise_is_undone() {
        assert_eq!(next_action(5.0, 10.0, Decrease, Increase, 1.0), Increase);
        assert_eq!(next_action(5.0, 10.0, Decrease, Decrease, 1.0), Increase);
    }

    // Rule 4: a raise that did not help right after a cut: hold.
    #[test]
    fn useless_raise_after_cut_holds() {
        assert_eq!(next_action(10.0, 10.0, Increase, Decrease, 1.0), Hold);
    }

    #[test]
    fn unexplained_changes_hold() {
        assert_eq!(next_action(5.0, 10.0, Increase, Increase, 1.0), Hold);
        assert_eq!(next_action(5.0, 10.0, Hold, Decrease, 1.0), Hold);
        assert_eq!(next_action(10.0, 10.0, Decrease, Increase, 1.0), Hold);
    }

    #[test]
    fn each_review_moves_by_one_step() {
        let mut st = CapacityState::new(20.0, 2.0, 0.5);
        let before = st.shared;
        let a = st.review(7.0);
        assert_eq!(a, Decrease);
        assert_eq!(st.shared, before - 2.0);
        st.review(7.0);
        assert_eq!(st.shared, before - 4.0);
    }

    #[test]
    fn floor_turns_cut_into_raise() {
        let mut st = CapacityState::new(0.0, 1.0, 0.5);
        assert_eq!(st.review(0.0), Increase);
        assert_eq!(st.shared, 1.0);
    }

    #[test]
    fn never_negative() {
        let mut st = CapacityState::new(0.5, 2.0, 0.5);
        st.review(1.0);
        assert_eq!(st.shared, 0.0);
    }
}
