//! Optimal harvest/sleep policies for a wireless node harvesting intermittent
//! ambient RF energy.
//!
//! Energy arrivals follow a two-state Gilbert-Elliott chain that the node only
//! observes when it tries to harvest. With known chain parameters the problem
//! is a two-action belief MDP whose optimal policy is a threshold: keep
//! harvesting after a success, sleep `N` slots after a failure. With unknown
//! parameters a truncated Bayesian posterior over transition counts drives
//! posterior-sampling decisions.
//!
//! Module map:
//!
//! * [`markov`]: arrival chain, stationary law, seeded sample paths.
//! * [`pomdp`]: rewards, belief updates.
//! * [`value_iteration`]: exact (alpha-vector) and grid value iteration.
//! * [`threshold`]: closed-form sleep counts, policy values, lookup tables.
//! * [`battery`]: absorbing-chain analysis of battery level under a policy.
//! * [`bayes`]: posterior counts, particle sets, the learning loop.
//! * [`harness`]: Monte-Carlo policy evaluation and experiment presets.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod bayes;
pub mod error;
pub mod harness;
pub mod markov;
pub mod pomdp;
pub mod rng;
pub mod threshold;
pub mod value_iteration;

pub use error::{Error, Result};
pub use markov::{ArrivalState, GEParams, InitialState, SamplePath};
pub use pomdp::{Action, Belief, Observation, RewardConfig};
pub use threshold::{LookupTable, PolicyValue, ThresholdPolicy};
pub use value_iteration::{AlphaVector, GridValueFunction, VISettings, ValueFunction};
