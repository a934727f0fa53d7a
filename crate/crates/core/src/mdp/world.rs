use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const N_ACTIONS: usize = 4;
pub const N_COLORS: usize = 4;

/// Movement actions in their fixed order; greedy ties break toward the lower index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Action::from_index(v as usize).ok_or_else(|| format!("action index {v} outside 0..4"))
    }
}

/// Grid coordinate: `x` is the column, `y` the row (growing downward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

/// Flattened transition model of a finite-horizon tabular MDP.
///
/// Successors of `(s, a)` live in `next[range(s, a)]` / `prob[range(s, a)]`.
/// Rewards are attached per transition, in a slice indexed the same way.
/// Terminal states accrue no reward and end the episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
    terminal: Vec<bool>,
    start: Vec<f64>,
}

impl Dynamics {
    /// `rows[s * n_actions + a]` lists `(successor, probability)` pairs.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        rows: Vec<Vec<(usize, f64)>>,
        terminal: Vec<bool>,
        start: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidWorld("no states or no actions".into()));
        }
        if rows.len() != n_states * n_actions || terminal.len() != n_states || start.len() != n_states {
            return Err(Error::ShapeMismatch(format!(
                "{} transition rows, {} terminal flags, {} start weights for {n_states} states x {n_actions} actions",
                rows.len(),
                terminal.len(),
                start.len()
            )));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        offsets.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let total: f64 = row.iter().map(|r| r.1).sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&(s, p)| s >= n_states || !(p >= 0.0)) {
                return Err(Error::InvalidWorld(format!(
                    "transition row for (s={}, a={}) is not a distribution over states",
                    i / n_actions,
                    i % n_actions
                )));
            }
            for (s, p) in row {
                if p > 0.0 {
                    next.push(s);
                    prob.push(p);
                }
            }
            offsets.push(next.len());
        }
        let mass: f64 = start.iter().sum();
        if (mass - 1.0).abs() > 1e-9 || start.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidWorld("start distribution does not sum to 1".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            offsets,
            next,
            prob,
            terminal,
            start,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_transitions(&self) -> usize {
        self.next.len()
    }
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
    pub fn start(&self) -> &[f64] {
        &self.start
    }

    #[inline]
    pub fn range(&self, s: usize, a: usize) -> Range<usize> {
        let i = s * self.n_actions + a;
        self.offsets[i]..self.offsets[i + 1]
    }

    #[inline]
    pub fn next_states(&self) -> &[usize] {
        &self.next
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn transition_prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        let r = self.range(s, a);
        self.next[r.clone()]
            .iter()
            .zip(&self.prob[r])
            .filter(|(&n, _)| n == s2)
            .map(|(_, &p)| p)
            .sum()
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let r = self.range(s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for i in r.clone() {
            acc += self.prob[i];
            if u < acc {
                return self.next[i];
            }
        }
        self.next[r.end - 1]
    }

    /// Same dynamics with a different start distribution.
    pub fn with_start(&self, start: Vec<f64>) -> Result<Self> {
        if start.len() != self.n_states {
            return Err(Error::ShapeMismatch("start distribution length".into()));
        }
        let mass: f64 = start.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWorld("start distribution does not sum to 1".into()));
        }
        Ok(Self {
            start,
            ..self.clone()
        })
    }

    /// Collapse per-transition rewards into expected rewards `r(s, a)`.
    pub fn expected_rewards(&self, transition_rewards: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let r = self.range(s, a);
                out[s * self.n_actions + a] = self.prob[r.clone()]
                    .iter()
                    .zip(&transition_rewards[r])
                    .map(|(p, x)| p * x)
                    .sum();
            }
        }
        out
    }
}

/// Serialized form of a [`GridWorld`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorldDoc {
    pub width: usize,
    pub height: usize,
    /// Row-major color indices in `0..4`.
    pub colors: Vec<u8>,
    pub goal: [usize; 2],
    pub horizon: usize,
    pub slip_prob: f64,
    pub completion_bonus: f64,
}

/// Colored gridworld with slip noise and an absorbing goal.
///
/// Each move pays the reward of the tile it lands on, `theta[color(s')]`.
/// The goal tile carries no color reward: entering it pays
/// `completion_bonus` instead and ends the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridWorldDoc", into = "GridWorldDoc")]
pub struct GridWorld {
    doc: GridWorldDoc,
    dynamics: Dynamics,
    /// Per transition: color of the landing cell, `None` when it is the goal.
    trans_color: Vec<Option<u8>>,
    /// Per transition: whether it enters the goal from outside.
    trans_goal: Vec<bool>,
}

pub const DEFAULT_SIZE: usize = 10;
pub const DEFAULT_HORIZON: usize = 25;
pub const DEFAULT_SLIP: f64 = 0.1;
pub const DEFAULT_BONUS: f64 = 250.0;

impl TryFrom<GridWorldDoc> for GridWorld {
    type Error = Error;
    fn try_from(doc: GridWorldDoc) -> Result<Self> {
        GridWorld::from_doc(doc)
    }
}

impl From<GridWorld> for GridWorldDoc {
    fn from(w: GridWorld) -> Self {
        w.doc
    }
}

impl GridWorld {
    pub fn from_doc(doc: GridWorldDoc) -> Result<Self> {
        let GridWorldDoc {
            width,
            height,
            ref colors,
            goal,
            horizon,
            slip_prob,
            completion_bonus,
        } = doc;
        if width == 0 || height == 0 {
            return Err(Error::InvalidWorld("empty grid".into()));
        }
        if colors.len() != width * height {
            return Err(Error::InvalidWorld(format!(
                "{} colors for a {width}x{height} grid",
                colors.len()
            )));
        }
        if let Some(c) = colors.iter().find(|&&c| c as usize >= N_COLORS) {
            return Err(Error::InvalidWorld(format!("color index {c} outside 0..4")));
        }
        if goal[0] >= width || goal[1] >= height {
            return Err(Error::InvalidWorld("goal outside grid".into()));
        }
        if !(0.0..=1.0).contains(&slip_prob) {
            return Err(Error::InvalidWorld(format!("slip probability {slip_prob} outside [0, 1]")));
        }
        if !completion_bonus.is_finite() {
            return Err(Error::NonFiniteReward);
        }

        let n = width * height;
        let goal_idx = goal[1] * width + goal[0];
        let mut rows = Vec::with_capacity(n * N_ACTIONS);
        for s in 0..n {
            for a in Action::ALL {
                if s == goal_idx {
                    rows.push(vec![(s, 1.0)]);
                    continue;
                }
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
                for b in Action::ALL {
                    let p = if a == b { 1.0 - slip_prob } else { slip_prob / 3.0 };
                    if p <= 0.0 {
                        continue;
                    }
                    let to = Self::step_index(width, height, s, b);
                    match row.iter_mut().find(|e| e.0 == to) {
                        Some(e) => e.1 += p,
                        None => row.push((to, p)),
                    }
                }
                rows.push(row);
            }
        }
        let terminal: Vec<bool> = (0..n).map(|s| s == goal_idx).collect();
        let start_mass = 1.0 / (n as f64 - 1.0).max(1.0);
        let start: Vec<f64> = (0..n)
            .map(|s| if s == goal_idx && n > 1 { 0.0 } else { start_mass })
            .collect();
        let start = if n == 1 { vec![1.0] } else { start };
        let dynamics = Dynamics::new(n, N_ACTIONS, horizon, rows, terminal, start)?;

        let mut trans_color = Vec::with_capacity(dynamics.n_transitions());
        let mut trans_goal = Vec::with_capacity(dynamics.n_transitions());
        for s in 0..n {
            for a in 0..N_ACTIONS {
                for i in dynamics.range(s, a) {
                    let to = dynamics.next_states()[i];
                    let live = s != goal_idx;
                    trans_color.push((live && to != goal_idx).then_some(colors[to]));
                    trans_goal.push(live && to == goal_idx);
                }
            }
        }
        Ok(Self {
            doc,
            dynamics,
            trans_color,
            trans_goal,
        })
    }

    /// Random coloring with the goal in the bottom-right corner.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        width: usize,
        height: usize,
        horizon: usize,
        slip_prob: f64,
        completion_bonus: f64,
    ) -> Result<Self> {
        let colors = (0..width * height).map(|_| rng.random_range(0..N_COLORS as u8)).collect();
        Self::from_doc(GridWorldDoc {
            width,
            height,
            colors,
            goal: [width.saturating_sub(1), height.saturating_sub(1)],
            horizon,
            slip_prob,
            completion_bonus,
        })
    }

    /// The 10x10, horizon-25, slip-0.1, bonus-250 world used by the feedback interface.
    pub fn standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::random(rng, DEFAULT_SIZE, DEFAULT_SIZE, DEFAULT_HORIZON, DEFAULT_SLIP, DEFAULT_BONUS)
            .expect("standard world parameters are valid")
    }

    fn step_index(width: usize, height: usize, s: usize, a: Action) -> usize {
        let (x, y) = ((s % width) as isize, (s / width) as isize);
        let (dx, dy) = a.delta();
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
            s
        } else {
            ny as usize * width + nx as usize
        }
    }

    pub fn doc(&self) -> &GridWorldDoc {
        &self.doc
    }
    pub fn width(&self) -> usize {
        self.doc.width
    }
    pub fn height(&self) -> usize {
        self.doc.height
    }
    pub fn horizon(&self) -> usize {
        self.doc.horizon
    }
    pub fn slip_prob(&self) -> f64 {
        self.doc.slip_prob
    }
    pub fn completion_bonus(&self) -> f64 {
        self.doc.completion_bonus
    }
    pub fn n_states(&self) -> usize {
        self.doc.width * self.doc.height
    }
    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn goal(&self) -> Cell {
        Cell::new(self.doc.goal[0], self.doc.goal[1])
    }

    pub fn goal_index(&self) -> usize {
        self.index(self.goal())
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y * self.doc.width + c.x
    }

    pub fn cell(&self, s: usize) -> Cell {
        Cell::new(s % self.doc.width, s / self.doc.width)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.doc.width && c.y < self.doc.height
    }

    pub fn color(&self, c: Cell) -> usize {
        self.doc.colors[self.index(c)] as usize
    }

    pub fn is_goal(&self, c: Cell) -> bool {
        c == self.goal()
    }

    /// Cell reached by executing `a` without slipping.
    pub fn intended_next(&self, c: Cell, a: Action) -> Cell {
        self.cell(Self::step_index(self.doc.width, self.doc.height, self.index(c), a))
    }

    /// Per-transition rewards for color weights `theta`.
    pub fn transition_rewards(&self, theta: &[f64; 4]) -> Vec<f64> {
        let bonus = self.doc.completion_bonus;
        self.trans_color
            .iter()
            .zip(&self.trans_goal)
            .map(|(&c, &g)| c.map_or(0.0, |c| theta[c as usize]) + if g { bonus } else { 0.0 })
            .collect()
    }

    /// Non-goal cells, in index order.
    pub fn start_cells(&self) -> Vec<Cell> {
        (0..self.n_states())
            .filter(|&s| !self.dynamics.is_terminal(s))
            .map(|s| self.cell(s))
            .collect()
    }

    /// Dynamics restarted deterministically at `start`.
    pub fn dynamics_from(&self, start: Cell) -> Result<Dynamics> {
        let mut d = vec![0.0; self.n_states()];
        d[self.index(start)] = 1.0;
        self.dynamics.with_start(d)
    }

    /// Copy of this world with different slip noise.
    pub fn with_slip(&self, slip_prob: f64) -> Result<Self> {
        Self::from_doc(GridWorldDoc {
            slip_prob,
            ..self.doc.clone()
        })
    }

    pub fn with_bonus(&self, completion_bonus: f64) -> Result<Self> {
        Self::from_doc(GridWorldDoc {
            completion_bonus,
            ..self.doc.clone()
        })
    }
}
