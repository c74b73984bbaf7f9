//! Decentralized multi-agent learning with empathic reward gifting.
// Negated float comparisons are how range checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod approximator;
pub mod config;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod matrix_dynamics;
pub mod metrics;
pub mod schelling;
pub mod sri;
pub mod trainer;

pub use error::{LaseError, Result};
