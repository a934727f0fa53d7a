use serde::{Deserialize, Serialize};

use super::world::{Action, Cell, GridWorld, N_COLORS};
use crate::error::check_discount;
use crate::math::dot4;
use crate::{Error, Result};

/// A sequence of state-action pairs ending in a final state.
///
/// `cells` has one more entry than `actions`: `cells[t]` is the state before
/// `actions[t]`, `cells[t + 1]` the realized successor. Serialized as an array
/// of `[x, y, action]` triples whose last action is `null`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<(usize, usize, Option<Action>)>", try_from = "Vec<(usize, usize, Option<Action>)>")]
pub struct Trajectory {
    cells: Vec<Cell>,
    actions: Vec<Action>,
}

impl From<Trajectory> for Vec<(usize, usize, Option<Action>)> {
    fn from(t: Trajectory) -> Self {
        t.cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.x, c.y, t.actions.get(i).copied()))
            .collect()
    }
}

impl TryFrom<Vec<(usize, usize, Option<Action>)>> for Trajectory {
    type Error = String;
    fn try_from(v: Vec<(usize, usize, Option<Action>)>) -> std::result::Result<Self, String> {
        let n = v.len();
        if n == 0 {
            return Err("trajectory needs at least a start state".into());
        }
        let mut cells = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n - 1);
        for (i, (x, y, a)) in v.into_iter().enumerate() {
            cells.push(Cell::new(x, y));
            match (a, i + 1 == n) {
                (Some(a), false) => actions.push(a),
                (None, true) => {}
                (Some(_), true) => return Err("final entry must have a null action".into()),
                (None, false) => return Err(format!("entry {i} is missing its action")),
            }
        }
        Ok(Trajectory { cells, actions })
    }
}

/// Linear decomposition of a (possibly discounted) return:
/// `return = theta . colors + bonus_weight * completion_bonus`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReturnFeatures {
    pub colors: [f64; N_COLORS],
    pub bonus_weight: f64,
}

impl ReturnFeatures {
    pub fn value(&self, theta: &[f64; 4], completion_bonus: f64) -> f64 {
        dot4(theta, &self.colors) + self.bonus_weight * completion_bonus
    }
}

impl Trajectory {
    pub fn new(cells: Vec<Cell>, actions: Vec<Action>) -> Result<Self> {
        if cells.len() != actions.len() + 1 {
            return Err(Error::InvalidTrajectory(format!(
                "{} states for {} actions",
                cells.len(),
                actions.len()
            )));
        }
        Ok(Self { cells, actions })
    }

    /// A zero-step trajectory sitting at `start`.
    pub fn start_at(start: Cell) -> Self {
        Self {
            cells: vec![start],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Action, next: Cell) {
        self.actions.push(action);
        self.cells.push(next);
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn last(&self) -> Cell {
        *self.cells.last().expect("trajectory has a start state")
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// `(t, state, action, next_state)` for every transition.
    pub fn steps(&self) -> impl Iterator<Item = (usize, Cell, Action, Cell)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, &a)| (t, self.cells[t], a, self.cells[t + 1]))
    }

    /// The sub-trajectory made of the first `k` transitions.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k > self.len() {
            return Err(Error::StopOutOfRange { t: k, max: self.len() });
        }
        Ok(Self {
            cells: self.cells[..=k].to_vec(),
            actions: self.actions[..k].to_vec(),
        })
    }

    /// Checks the trajectory is realizable in `world`: every state is on the
    /// grid, every transition has positive probability, nothing happens after
    /// the goal and the horizon is respected.
    pub fn validate(&self, world: &GridWorld) -> Result<()> {
        if let Some(c) = self.cells.iter().find(|c| !world.contains(**c)) {
            return Err(Error::InvalidTrajectory(format!("cell ({}, {}) is off the grid", c.x, c.y)));
        }
        if self.len() > world.horizon() {
            return Err(Error::InvalidTrajectory(format!(
                "{} steps exceed horizon {}",
                self.len(),
                world.horizon()
            )));
        }
        let d = world.dynamics();
        for (t, s, a, s2) in self.steps() {
            if world.is_goal(s) {
                return Err(Error::InvalidTrajectory(format!("step {t} continues past the goal")));
            }
            if d.transition_prob(world.index(s), a.index(), world.index(s2)) <= 0.0 {
                return Err(Error::InvalidTrajectory(format!(
                    "step {t}: ({}, {}) -> ({}, {}) is impossible under {:?}",
                    s.x, s.y, s2.x, s2.y, a
                )));
            }
        }
        Ok(())
    }

    /// Return features with per-step discount `discount^t`.
    pub fn features(&self, world: &GridWorld, discount: f64) -> ReturnFeatures {
        self.prefix_features(world, discount)
            .pop()
            .expect("prefix features always include the empty prefix")
    }

    /// Features of every prefix `xi_{0:k}`, `k = 0..=len`.
    pub fn prefix_features(&self, world: &GridWorld, discount: f64) -> Vec<ReturnFeatures> {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut acc = ReturnFeatures::default();
        out.push(acc);
        let mut w = 1.0;
        for (_, _, _, s2) in self.steps() {
            if world.is_goal(s2) {
                acc.bonus_weight += w;
            } else {
                acc.colors[world.color(s2)] += w;
            }
            out.push(acc);
            w *= discount;
        }
        out
    }

    /// Undiscounted per-step rewards under `theta`.
    pub fn step_rewards(&self, world: &GridWorld, theta: &[f64; 4]) -> Vec<f64> {
        self.steps()
            .map(|(_, _, _, s2)| {
                if world.is_goal(s2) {
                    world.completion_bonus()
                } else {
                    theta[world.color(s2)]
                }
            })
            .collect()
    }

    /// Number of steps landing on each color (the start cell and the goal excluded).
    pub fn color_counts(&self, world: &GridWorld) -> [usize; N_COLORS] {
        let mut counts = [0; N_COLORS];
        for (_, _, _, s2) in self.steps() {
            if !world.is_goal(s2) {
                counts[world.color(s2)] += 1;
            }
        }
        counts
    }
}

/// Cumulative (discounted) reward of a trajectory, completion bonus included.
pub fn trajectory_return(world: &GridWorld, traj: &Trajectory, theta: &[f64; 4], discount: f64) -> Result<f64> {
    check_discount(discount)?;
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(traj.features(world, discount).value(theta, world.completion_bonus()))
}
