//! Reputation-weighted probabilistic resource sharing for peer-to-peer
//! networks, with a deterministic discrete-time simulator.
//!
//! The building blocks ([`reputation`], [`allocator`], [`capacity`],
//! [`interest`]) are plain functions and small state types; [`sim`] wires
//! them into a network and [`experiment`] runs canned scenarios and writes
//! CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocator;
pub mod capacity;
pub mod experiment;
pub mod interest;
pub mod model;
pub mod oracle_check;
pub mod reputation;
pub mod sim;

pub use model::{NodeId, RateObservation};
