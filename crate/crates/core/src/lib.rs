//! Entropy-aware model initialization for discrete-action reinforcement learning.
//!
//! A freshly initialized policy network is rolled out by `M` actors for `T`
//! steps, its mean action-distribution entropy is measured, and the model is
//! re-drawn from a new seed until that entropy clears a threshold. The crate
//! also carries the pieces needed to study the effect at desk scale: small
//! deterministic tasks, a PPO-clip / REINFORCE trainer, and a resumable
//! multi-seed experiment harness.

pub mod cli;
pub mod entropy;
pub mod envs;
mod error;
pub mod harness;
pub mod initializer;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
