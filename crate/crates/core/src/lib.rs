//! Gridworld transfer-learning lab.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: deterministic navigation environments that share one dynamic
//!   across tasks differing only in goal placement.
//! - [`dynamics`]: online inference of the binary transition structure from
//!   trajectories of any policy, plus the counters behind the intrinsic
//!   reward and the embedding sampler.
//! - [`nn`]: a small dense-network kernel with analytic gradients and a
//!   finite-difference checker.
//! - [`embedding`]: state embeddings trained to match the inferred dynamic,
//!   kept strictly separate from value learning.
//! - [`intrinsic`]: the neighbor-count exploration bonus and schedules.
//! - [`agents`]: learning agents (tabular Q, successor representation, deep
//!   value learner, actor-critic, spectral-basis features) with optional
//!   dynamics-aligned embeddings and intrinsic reward.
//! - [`harness`]: config-driven experiment protocols, metrics persistence,
//!   aggregation, and heatmap emission.

pub mod agents;
pub mod dynamics;
pub mod embedding;
pub mod grid;
pub mod harness;
pub mod intrinsic;
pub mod nn;
pub mod rng;
pub mod stats;

pub use grid::{Action, GridEnv, GridSpec, StateId, Task};
