//! Simulation laboratory for respondent-driven sampling (RDS).
//!
//! The crate is organised bottom-up:
//!
//! * [`netgen`] builds two-group populations with homophily and differential activity.
//! * [`sampler`] runs the coupon process with configurable respondent behaviour.
//! * [`estimators`] computes the Naive, VH, SS, SH and H estimates of the infected proportion.
//! * [`harness`] replicates conditions, summarises them and runs paired comparisons.

pub mod estimators;
pub mod harness;
pub mod netgen;
pub mod rng;
pub mod sampler;

pub use estimators::{estimate_all, EstimateSet, FailureCode, SsOptions};
pub use harness::{run_condition, summarize, Condition, ConditionSummary, ReplicationTable};
pub use netgen::{generate_network, solve_block_probabilities, BlockProbabilities, Network, NetworkSpec};
pub use sampler::{run_rds, BehaviorConfig, Sample, SamplingConfig, SeedRule};
