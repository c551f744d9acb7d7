//! A desk-scale laboratory for cross-embodiment reward learning from
//! mixed-quality, mixed-embodiment (MQME) demonstration data.
//!
//! The crate is organized as a pipeline:
//!
//! * [`sim`] — deterministic multi-embodiment block-pushing grid environment.
//! * [`demogen`] — scripted oracles, noise-degraded rollouts, and the
//!   quality-stratified MQME dataset with a persistent binary format.
//! * [`feedback`] — synthetic labelers producing pairwise preferences,
//!   ordered triplets, and ordinal quality buckets.
//! * [`diffnet`] — a minimal reverse-mode differentiation engine hosting the
//!   trainable frame encoder, scalar heads, and the Adam optimizer.
//! * [`replearn`] — representation- and reward-learning objectives (temporal
//!   cycle-consistency, preference cross-entropy, triplet ranking, goal
//!   classification) and their training loops.
//! * [`reward`] — learned reward functions: distance-to-goal, direct scalar
//!   nets, and classifier probabilities.
//! * [`rl`] — tabular Q-learning with a value-iteration oracle for the
//!   held-out embodiment transfer protocol.
//! * [`eval`] — reward alignment metrics (Kendall's tau, pairwise accuracy)
//!   and learning-curve aggregation.
//! * [`pipeline`] — end-to-end experiment orchestration and artifact layout
//!   shared by the CLI and the acceptance suite.

pub mod bytesio;
pub mod demogen;
pub mod diffnet;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod pipeline;
pub mod replearn;
pub mod reward;
pub mod rl;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
