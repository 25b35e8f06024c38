//! Planning by heuristic search over actions proposed by a generative policy.
//!
//! Each candidate action is scored by its generation probability (Say), a
//! learned feasibility estimate (Can), and a learned payoff estimate (Pay);
//! greedy and beam search over actions select the plan. The crate also ships
//! the text-world environments, an optimal BFS oracle used to build training
//! data, lightweight trainable scorers, and the evaluation harness.

pub mod decoding;
pub mod envs;
pub mod error;
pub mod eval;
#[cfg(test)]
mod fixtures;
pub mod models;
pub mod oracle;
pub mod plan;
pub mod search;

pub use error::{ContractError, Error, Result};
