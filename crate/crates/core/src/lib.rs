//! Deterministic simulator for validated decentralized learning.
//!
//! Honest agents run gossip-mixed SGD over a graph, then run a hash-based
//! validation phase that either certifies an admissible consensus model or
//! detects Byzantine presence. See the README for a walkthrough.

pub mod adversary;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod learning;
pub mod numerics;
pub mod rng;
pub mod topology;
pub mod validation;

pub use error::{Error, Result};
