//! Routing toolkit for multi-trip, multi-modal relief operations.
//!
//! The problem: heterogeneous vehicles stationed at depots must move several
//! cargo types between warehouses, demand nodes, relief centres and
//! transhipment ports spread over single-mode network segments, minimizing
//! the descending-sorted vector of route durations lexicographically
//! (cascaded makespan). Ports let one vehicle deposit cargo that another
//! collects later, which couples routes in time.
//!
//! The crate provides:
//! - an instance model with a JSON wire format ([`instance`]),
//! - a decision-tree construction heuristic with preference scores,
//!   micro-route (SRE) generation, causally-ordered route integration and
//!   perturbation ([`dts`], [`sre`], [`route`], [`perturb`], [`solver`]),
//! - waiting-time computation at ports from piecewise-linear deposit
//!   envelopes ([`timing`]),
//! - an independent solution validator and brute-force oracles ([`validate`],
//!   [`oracle`]),
//! - a mixed-integer model builder with LP-format export ([`milp`]).

pub mod dts;
pub mod hyper;
pub mod instance;
pub mod milp;
pub mod oracle;
pub mod perturb;
pub mod rng;
pub mod route;
pub mod solution;
pub mod solver;
pub mod sre;
pub mod timing;
pub mod validate;
