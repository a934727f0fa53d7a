//! Reward learning from human feedback under a Boltzmann-rational choice model.
//!
//! The crate is organized bottom-up:
//!
//! * [`mdp`] — finite-horizon gridworlds, soft/hard value iteration and exact
//!   policy evaluation.
//! * [`reward`] — unit-norm reward vectors and the discretized reward space.
//! * [`feedback`] — demonstrations, comparisons and e-stops as reward-rational
//!   choices, with their likelihoods.
//! * [`belief`] — exact Bayesian posteriors over the reward grid and the
//!   regret / MSE evaluation metrics.
//! * [`bias`] — simulated humans: Boltzmann-rational responders optionally
//!   distorted by myopia, extremal or optimism biases.
//! * [`beta_fit`] — estimating the rationality coefficient from calibration
//!   data, plus exact M-projection fits and their diagnostics.
//! * [`active`] — expected-information-gain query selection across feedback
//!   types.
//! * [`toy`] — the closed-form demonstrations-vs-comparisons entropy model.

pub mod active;
pub mod belief;
pub mod beta_fit;
pub mod bias;
mod error;
pub mod feedback;
pub mod math;
pub mod mdp;
pub mod reward;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
pub use feedback::{BetaByKind, FeedbackKind, FeedbackQuery, FeedbackResponse, Preference};
pub use mdp::{Action, Cell, GridWorld, TabularPolicy, Trajectory};
pub use reward::{RewardGrid, RewardVector};
