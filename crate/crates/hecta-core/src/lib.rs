//! Emergency-rescue crowdsensing laboratory.
//!
//! A grid-world simulator of heterogeneous sensing entities (human workers,
//! UAVs, UGVs) with a hard-cooperative battery protocol, plus a from-scratch
//! multi-agent value-decomposition learner, baselines, and an exact belief
//! filter for small models.

pub mod belief;
pub mod encoding;
pub mod learning;
pub mod mixing;
pub mod neural;
pub mod policy;
pub mod scenario;
pub mod world;
