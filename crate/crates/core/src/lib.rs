//! Permutation tools for detecting, testing and correcting confounding in
//! machine-learning evaluation.

pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod inference;
pub mod learners;
pub mod metrics;
pub mod nulls;
pub mod partials;
pub mod shuffle;
pub mod stats;
pub mod synthdata;

pub use error::{Error, Result};
