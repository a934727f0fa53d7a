//! Simulation studies for Boltzmann-rational reward learning.
//!
//! Each experiment takes a serializable config, runs its cells on a small
//! work queue with per-cell deterministic seeds, and streams rows to CSV.

pub mod ablation;
pub mod config;
pub mod diagnostics;
mod error;
pub mod output;
pub mod queue;
pub mod sim;
pub mod sweeps;
pub mod toy;

pub use error::{HarnessError, Result};
