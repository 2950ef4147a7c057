//! Reward learning from ranking feedback.
//!
//! The crate implements a bi-level loop: an inner loop trains a policy on a
//! parametric reward, and an outer loop asks a ranking oracle to order sampled
//! executions, turns ranking disagreements into pairwise preferences, and
//! moves the reward parameters to the MAP estimate of a Boltzmann-rational
//! Bradley-Terry posterior. When the rankings already agree but the policy
//! stalls, the oracle is asked which parameters to push up or down and the
//! search is rerun inside the correspondingly restricted domain.
//!
//! Module map:
//! - [`reward`]: declarative reward specs, parameter domains, relabeling
//! - [`preference`]: pairwise likelihood and log-posterior
//! - [`inference`]: Metropolis-Hastings chains and radius-bounded search
//! - [`ranking`]: reward-induced rankings, discrepancies, preference datasets
//! - [`oracle`]: scripted and HTTP-backed ranking/reflection oracles
//! - [`envs`]: deterministic toy manipulation environments
//! - [`rl`]: linear-Gaussian policies, CEM inner loop, replay buffer
//! - [`alignment`]: the outer orchestrator and run artifacts
//! - [`specgen`]: reward-proposal prompts and structured-reply validation

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod alignment;
pub mod envs;
mod error;
pub mod inference;
pub mod oracle;
pub mod preference;
pub mod ranking;
pub mod reward;
pub mod rl;
pub mod seed;
pub mod specgen;

pub use error::{Error, Result};

/// Identifier of a trajectory, unique within a run.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TrajId(pub u64);

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
