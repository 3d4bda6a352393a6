//! Population-based self-play with one identity-conditioned policy.
//!
//! A single network `pi(a | s, id)` plays every member of a population.
//! Training alternates between a shared stage, where the conditional
//! policy is refined against a weighted set of its own past generations,
//! and a specialization stage, where per-id copies are fine-tuned against
//! the frozen shared policy.

pub mod error;
pub mod game;
pub mod envs;
pub mod rng;
pub mod policy;
pub mod objectives;
pub mod population;
pub mod eval;
pub mod config;
pub mod checkpoint;
pub mod checks;

pub use error::{Error, Result};
