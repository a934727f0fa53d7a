//! Finite-horizon gridworld MDPs and their planners.

mod planning;
mod trajectory;
mod world;

pub use planning::{
    evaluate_policy, evaluate_policy_with, expected_return, hard_value_iteration, sample_index, sample_trajectory,
    soft_backward_induction, soft_value_iteration, Backup, HardSolution, SoftSolution, TabularPolicy,
};
pub use trajectory::{trajectory_return, ReturnFeatures, Trajectory};
pub use world::{
    Action, Cell, Dynamics, GridWorld, GridWorldDoc, DEFAULT_BONUS, DEFAULT_HORIZON, DEFAULT_SIZE, DEFAULT_SLIP,
    N_ACTIONS, N_COLORS,
};
