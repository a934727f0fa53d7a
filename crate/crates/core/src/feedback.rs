//! Feedback as reward-rational choice.
//!
//! Each feedback kind is a design shown to the human, a set of possible
//! answers, and a grounding of each answer into a trajectory whose return
//! explains the choice. Likelihoods are Boltzmann in that return (or, for
//! demonstrations, in the soft Q-values of every step).

use serde::{Deserialize, Serialize};

use crate::error::check_beta;
use crate::math::{log_sigmoid, log_sum_exp};
use crate::mdp::{Cell, GridWorld, ReturnFeatures, SoftSolution, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Demonstration,
    Comparison,
    #[serde(rename = "estop")]
    EStop,
}

impl FeedbackKind {
    pub const ALL: [FeedbackKind; 3] = [FeedbackKind::Demonstration, FeedbackKind::Comparison, FeedbackKind::EStop];

    pub fn name(self) -> &'static str {
        match self {
            FeedbackKind::Demonstration => "demonstration",
            FeedbackKind::Comparison => "comparison",
            FeedbackKind::EStop => "estop",
        }
    }

    /// Position in the selection tie-break order: comparison, e-stop, demonstration.
    pub fn tie_rank(self) -> usize {
        match self {
            FeedbackKind::Comparison => 0,
            FeedbackKind::EStop => 1,
            FeedbackKind::Demonstration => 2,
        }
    }
}

impl std::fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeedbackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demonstration" | "demo" => Ok(FeedbackKind::Demonstration),
            "comparison" | "comp" => Ok(FeedbackKind::Comparison),
            "estop" | "e-stop" => Ok(FeedbackKind::EStop),
            other => Err(Error::InvalidParameter(format!("unknown feedback kind '{other}'"))),
        }
    }
}

/// One rationality coefficient per feedback kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaByKind {
    pub demo: f64,
    pub comp: f64,
    pub estop: f64,
}

impl BetaByKind {
    pub fn uniform(beta: f64) -> Self {
        Self {
            demo: beta,
            comp: beta,
            estop: beta,
        }
    }

    pub fn get(&self, kind: FeedbackKind) -> f64 {
        match kind {
            FeedbackKind::Demonstration => self.demo,
            FeedbackKind::Comparison => self.comp,
            FeedbackKind::EStop => self.estop,
        }
    }

    pub fn set(&mut self, kind: FeedbackKind, beta: f64) {
        match kind {
            FeedbackKind::Demonstration => self.demo = beta,
            FeedbackKind::Comparison => self.comp = beta,
            FeedbackKind::EStop => self.estop = beta,
        }
    }

    pub fn with(mut self, kind: FeedbackKind, beta: f64) -> Self {
        self.set(kind, beta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        FeedbackKind::ALL.iter().try_for_each(|&k| check_beta(self.get(k)))
    }
}

impl Default for BetaByKind {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preference {
    A,
    B,
}

impl Preference {
    pub fn index(self) -> usize {
        match self {
            Preference::A => 0,
            Preference::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Preference::A),
            1 => Some(Preference::B),
            _ => None,
        }
    }
}

/// A design to show the human.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "design", rename_all = "lowercase")]
pub enum FeedbackQuery {
    /// Demonstrate from this start cell.
    Demonstration(Cell),
    /// Pick the better of two trajectories.
    Comparison(Trajectory, Trajectory),
    /// Pick a stopping time along this trajectory.
    #[serde(rename = "estop")]
    EStop(Trajectory),
}

impl FeedbackQuery {
    pub fn kind(&self) -> FeedbackKind {
        match self {
            FeedbackQuery::Demonstration(_) => FeedbackKind::Demonstration,
            FeedbackQuery::Comparison(..) => FeedbackKind::Comparison,
            FeedbackQuery::EStop(_) => FeedbackKind::EStop,
        }
    }

    pub fn validate(&self, world: &GridWorld) -> Result<()> {
        match self {
            FeedbackQuery::Demonstration(c) => {
                if !world.contains(*c) || world.is_goal(*c) {
                    return Err(Error::InvalidParameter(format!(
                        "demonstration start ({}, {}) must be a non-goal cell",
                        c.x, c.y
                    )));
                }
                Ok(())
            }
            FeedbackQuery::Comparison(a, b) => {
                a.validate(world)?;
                b.validate(world)
            }
            FeedbackQuery::EStop(t) => t.validate(world),
        }
    }

    /// Number of discrete answers; `None` for demonstrations.
    pub fn n_choices(&self) -> Option<usize> {
        match self {
            FeedbackQuery::Demonstration(_) => None,
            FeedbackQuery::Comparison(..) => Some(2),
            FeedbackQuery::EStop(t) => Some(t.len() + 1),
        }
    }

    /// Return features of every grounded answer of a finite-choice design,
    /// with per-step discount `discount`.
    pub fn choice_features(&self, world: &GridWorld, discount: f64) -> Option<Vec<ReturnFeatures>> {
        match self {
            FeedbackQuery::Demonstration(_) => None,
            FeedbackQuery::Comparison(a, b) => Some(vec![a.features(world, discount), b.features(world, discount)]),
            FeedbackQuery::EStop(t) => Some(t.prefix_features(world, discount)),
        }
    }
}

/// A design together with the human's answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeedbackResponse {
    Demonstration {
        design: Cell,
        choice: Trajectory,
    },
    Comparison {
        design: (Trajectory, Trajectory),
        choice: Preference,
    },
    #[serde(rename = "estop")]
    EStop {
        design: Trajectory,
        choice: usize,
    },
}

impl FeedbackResponse {
    pub fn kind(&self) -> FeedbackKind {
        match self {
            FeedbackResponse::Demonstration { .. } => FeedbackKind::Demonstration,
            FeedbackResponse::Comparison { .. } => FeedbackKind::Comparison,
            FeedbackResponse::EStop { .. } => FeedbackKind::EStop,
        }
    }

    pub fn query(&self) -> FeedbackQuery {
        match self {
            FeedbackResponse::Demonstration { design, .. } => FeedbackQuery::Demonstration(*design),
            FeedbackResponse::Comparison { design, .. } => FeedbackQuery::Comparison(design.0.clone(), design.1.clone()),
            FeedbackResponse::EStop { design, .. } => FeedbackQuery::EStop(design.clone()),
        }
    }

    /// Pairs a query with a discrete answer index (comparison label or stop time).
    pub fn from_choice(query: &FeedbackQuery, choice: usize) -> Result<Self> {
        match query {
            FeedbackQuery::Demonstration(_) => Err(Error::InvalidParameter(
                "demonstration answers are trajectories, not indices".into(),
            )),
            FeedbackQuery::Comparison(a, b) => Ok(FeedbackResponse::Comparison {
                design: (a.clone(), b.clone()),
                choice: Preference::from_index(choice)
                    .ok_or_else(|| Error::InvalidParameter(format!("comparison choice {choice}")))?,
            }),
            FeedbackQuery::EStop(t) => {
                if choice > t.len() {
                    return Err(Error::StopOutOfRange { t: choice, max: t.len() });
                }
                Ok(FeedbackResponse::EStop {
                    design: t.clone(),
                    choice,
                })
            }
        }
    }

    /// Index of the answer within the design's choice set; `None` for demonstrations.
    pub fn choice_index(&self) -> Option<usize> {
        match self {
            FeedbackResponse::Demonstration { .. } => None,
            FeedbackResponse::Comparison { choice, .. } => Some(choice.index()),
            FeedbackResponse::EStop { choice, .. } => Some(*choice),
        }
    }

    /// The trajectory that explains the answer.
    pub fn grounding(&self) -> Result<Trajectory> {
        match self {
            FeedbackResponse::Demonstration { choice, .. } => Ok(choice.clone()),
            FeedbackResponse::Comparison { design, choice } => Ok(match choice {
                Preference::A => design.0.clone(),
                Preference::B => design.1.clone(),
            }),
            FeedbackResponse::EStop { design, choice } => design.prefix(*choice),
        }
    }

    /// Checks the answer lies in the design's choice set and every trajectory is
    /// realizable in `world`.
    pub fn validate(&self, world: &GridWorld) -> Result<()> {
        self.query().validate(world)?;
        match self {
            FeedbackResponse::Demonstration { design, choice } => {
                if choice.start() != *design {
                    return Err(Error::InvalidTrajectory("demonstration does not begin at the design start".into()));
                }
                choice.validate(world)
            }
            FeedbackResponse::Comparison { .. } => Ok(()),
            FeedbackResponse::EStop { design, choice } => {
                if *choice > design.len() {
                    return Err(Error::StopOutOfRange {
                        t: *choice,
                        max: design.len(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// `Σ_t log π(a_t | s_t)` under a precomputed soft policy. Dynamics factors are
/// omitted: they do not depend on the reward.
pub fn demo_log_likelihood_from(world: &GridWorld, solution: &SoftSolution, traj: &Trajectory) -> Result<f64> {
    if traj.len() > solution.policy.horizon() {
        return Err(Error::InvalidTrajectory(format!(
            "{} steps exceed horizon {}",
            traj.len(),
            solution.policy.horizon()
        )));
    }
    let mut total = 0.0;
    for (t, s, a, _) in traj.steps() {
        if !world.contains(s) {
            return Err(Error::InvalidTrajectory(format!("cell ({}, {}) is off the grid", s.x, s.y)));
        }
        if a.index() >= solution.policy.n_actions() {
            return Err(Error::InvalidTrajectory(format!("action {a:?} outside the action set")));
        }
        total += solution.log_prob(t, world.index(s), a.index());
    }
    Ok(total)
}

/// Log-likelihood of a demonstration under the Boltzmann soft-optimal policy.
pub fn demo_log_likelihood(world: &GridWorld, traj: &Trajectory, theta: &[f64; 4], beta: f64) -> Result<f64> {
    let sol = world.soft_solve(theta, beta)?;
    demo_log_likelihood_from(world, &sol, traj)
}

/// `log P(choice)` for a Boltzmann choice among options with the given returns.
pub fn choice_log_likelihood(returns: &[f64], choice: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if choice >= returns.len() {
        return Err(Error::StopOutOfRange {
            t: choice,
            max: returns.len().saturating_sub(1),
        });
    }
    if returns.len() == 2 {
        let other = returns[1 - choice];
        return Ok(log_sigmoid(beta * (returns[choice] - other)));
    }
    let scaled: Vec<f64> = returns.iter().map(|r| beta * r).collect();
    Ok(scaled[choice] - log_sum_exp(&scaled))
}

/// Bradley-Terry probability of preferring `choice` out of `pair`.
pub fn comparison_likelihood(
    world: &GridWorld,
    pair: (&Trajectory, &Trajectory),
    choice: Preference,
    theta: &[f64; 4],
    beta: f64,
) -> Result<f64> {
    let bonus = world.completion_bonus();
    let returns = [
        pair.0.features(world, 1.0).value(theta, bonus),
        pair.1.features(world, 1.0).value(theta, bonus),
    ];
    Ok(choice_log_likelihood(&returns, choice.index(), beta)?.exp())
}

/// Probability of stopping after `t` steps of `traj`.
pub fn estop_likelihood(world: &GridWorld, traj: &Trajectory, t: usize, theta: &[f64; 4], beta: f64) -> Result<f64> {
    if t > traj.len() {
        return Err(Error::StopOutOfRange { t, max: traj.len() });
    }
    let bonus = world.completion_bonus();
    let returns: Vec<f64> = traj
        .prefix_features(world, 1.0)
        .iter()
        .map(|f| f.value(theta, bonus))
        .collect();
    Ok(choice_log_likelihood(&returns, t, beta)?.exp())
}

/// Log-likelihood of any response under the unbiased Boltzmann model.
pub fn response_log_likelihood(world: &GridWorld, resp: &FeedbackResponse, theta: &[f64; 4], beta: f64) -> Result<f64> {
    match resp {
        FeedbackResponse::Demonstration { choice, .. } => demo_log_likelihood(world, choice, theta, beta),
        _ => {
            let feats = resp.query().choice_features(world, 1.0).expect("finite-choice design");
            let bonus = world.completion_bonus();
            let returns: Vec<f64> = feats.iter().map(|f| f.value(theta, bonus)).collect();
            choice_log_likelihood(&returns, resp.choice_index().expect("finite choice"), beta)
        }
    }
}

/// Sum of [`response_log_likelihood`] over a response set, with one β per kind.
pub fn total_log_likelihood(
    world: &GridWorld,
    responses: &[FeedbackResponse],
    theta: &[f64; 4],
    betas: &BetaByKind,
) -> Result<f64> {
    responses
        .iter()
        .map(|r| response_log_likelihood(world, r, theta, betas.get(r.kind())))
        .sum()
}
