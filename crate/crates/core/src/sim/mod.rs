//! The network simulator.

pub mod config;
pub mod engine;
pub mod metrics;

pub use config::{
    parse_scenario, NodeGroup, RoutingMode, ScenarioConfig, ScenarioError, WorkloadKind,
};
pub use engine::{probe_for, run, QueryOutcome, Simulation};
pub use metrics::{MetricsSeries, NodeRow};
