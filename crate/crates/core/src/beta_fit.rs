//! Estimating the rationality coefficient.
//!
//! From finite calibration data the estimate is the likelihood maximizer under
//! a known reward. From a full behavioral policy it is the exact M-projection
//! onto the Boltzmann family, i.e. the infinite-data limit of that MLE.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::feedback::{choice_log_likelihood, demo_log_likelihood_from, FeedbackKind, FeedbackResponse};
use crate::math::{log_softmax_into, sample_variance, ScalarSearch, SearchResult};
use crate::mdp::{evaluate_policy_with, GridWorld, SoftSolution, TabularPolicy};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationItem {
    pub theta: [f64; 4],
    pub response: FeedbackResponse,
}

/// Feedback of a single kind given under known rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub kind: FeedbackKind,
    pub items: Vec<CalibrationItem>,
}

impl CalibrationSet {
    /// Builds a set, rejecting empty or mixed-kind inputs.
    pub fn new(items: Vec<CalibrationItem>) -> Result<Self> {
        let kind = items.first().ok_or(Error::Empty("calibration set"))?.response.kind();
        let set = Self { kind, items };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        if let Some(other) = self.items.iter().map(|i| i.response.kind()).find(|&k| k != self.kind) {
            return Err(Error::MixedKinds(self.kind.name(), other.name()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub kind: FeedbackKind,
    pub value: f64,
    /// Objective at the optimum: the log-likelihood for sample fits, the
    /// negated KL divergence for M-projections.
    pub ll: f64,
    pub range: (f64, f64),
    pub at_boundary: bool,
}

impl BetaEstimate {
    fn from_search(kind: FeedbackKind, search: &ScalarSearch, r: SearchResult) -> Self {
        Self {
            kind,
            value: r.argmax,
            ll: r.value,
            range: (search.low, search.high),
            at_boundary: r.at_boundary,
        }
    }
}

/// Calibration log-likelihood as a function of β.
pub struct CalibrationObjective<'a> {
    world: &'a GridWorld,
    set: &'a CalibrationSet,
    /// Per choice item: perceived returns of every answer and the answer index.
    choices: Vec<(Vec<f64>, usize)>,
    /// Soft solutions keyed on (theta bits, beta bits).
    memo: HashMap<([u64; 4], u64), SoftSolution>,
}

impl<'a> CalibrationObjective<'a> {
    pub fn new(world: &'a GridWorld, set: &'a CalibrationSet) -> Result<Self> {
        set.validate()?;
        let bonus = world.completion_bonus();
        let choices = set
            .items
            .iter()
            .filter_map(|it| {
                let feats = it.response.query().choice_features(world, 1.0)?;
                let r = feats.iter().map(|f| f.value(&it.theta, bonus)).collect();
                Some((r, it.response.choice_index().expect("finite choice")))
            })
            .collect();
        Ok(Self {
            world,
            set,
            choices,
            memo: HashMap::new(),
        })
    }

    pub fn log_likelihood(&mut self, beta: f64) -> Result<f64> {
        if self.set.kind != FeedbackKind::Demonstration {
            return self
                .choices
                .iter()
                .map(|(r, c)| choice_log_likelihood(r, *c, beta))
                .sum();
        }
        let mut total = 0.0;
        for it in &self.set.items {
            let key = (it.theta.map(f64::to_bits), beta.to_bits());
            if !self.memo.contains_key(&key) {
                self.memo.insert(key, self.world.soft_solve(&it.theta, beta)?);
            }
            let FeedbackResponse::Demonstration { choice, .. } = &it.response else {
                unreachable!("kind checked at construction")
            };
            total += demo_log_likelihood_from(self.world, &self.memo[&key], choice)?;
        }
        Ok(total)
    }
}

/// Maximum-likelihood β from calibration data.
pub fn fit_beta_mle(world: &GridWorld, set: &CalibrationSet, search: &ScalarSearch) -> Result<BetaEstimate> {
    let mut obj = CalibrationObjective::new(world, set)?;
    let mut err = None;
    let r = search.maximize(|b| match obj.log_likelihood(b) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            f64::NAN
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BetaEstimate::from_search(set.kind, search, r?))
}

/// `D_KL(π_true ‖ π_{β,θ})` accumulated along `π_true`'s own state
/// distribution from the world's start distribution.
pub fn policy_kl(world: &GridWorld, pi_true: &TabularPolicy, soft: &SoftSolution) -> Result<f64> {
    let ns = world.n_states();
    let na = pi_true.n_actions();
    evaluate_policy_with(world.dynamics(), pi_true, |t, s, a| {
        let p = pi_true.prob(t, s, a);
        p.ln() - soft.log_policy[(t * ns + s) * na + a]
    })
}

/// Exact M-projection of a demonstration policy onto soft-optimal policies for `theta`.
pub fn fit_beta_mprojection_demo(
    world: &GridWorld,
    pi_true: &TabularPolicy,
    theta: &[f64; 4],
    search: &ScalarSearch,
) -> Result<BetaEstimate> {
    let mut err = None;
    let r = search.maximize(|b| {
        match world.soft_solve(theta, b).and_then(|s| policy_kl(world, pi_true, &s)) {
            Ok(kl) => -kl,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BetaEstimate::from_search(FeedbackKind::Demonstration, search, r?))
}

/// One finite-choice design: answer probabilities and the answers' returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDesign {
    pub probs: Vec<f64>,
    pub rewards: Vec<f64>,
}

/// `Σ_designs Σ_i p_i log(p_i / softmax_i(β r))`.
pub fn choice_kl(designs: &[ChoiceDesign], beta: f64) -> f64 {
    let mut total = 0.0;
    let mut scaled = Vec::new();
    let mut logq = Vec::new();
    for d in designs {
        scaled.clear();
        scaled.extend(d.rewards.iter().map(|r| beta * r));
        logq.resize(scaled.len(), 0.0);
        log_softmax_into(&scaled, &mut logq);
        for (p, lq) in d.probs.iter().zip(&logq) {
            if *p > 0.0 {
                total += p * (p.ln() - lq);
            }
        }
    }
    total
}

/// M-projection of answer distributions over finite choice sets.
pub fn fit_beta_mprojection_choice(
    kind: FeedbackKind,
    designs: &[ChoiceDesign],
    search: &ScalarSearch,
) -> Result<BetaEstimate> {
    if designs.is_empty() {
        return Err(Error::Empty("choice designs"));
    }
    for d in designs {
        if d.probs.len() != d.rewards.len() || d.probs.len() < 2 {
            return Err(Error::ShapeMismatch("each design needs ≥ 2 choices with one reward each".into()));
        }
        let mass: f64 = d.probs.iter().sum();
        if (mass - 1.0).abs() > 1e-9 || d.probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("choice probabilities must sum to 1".into()));
        }
        if d.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFiniteReward);
        }
    }
    if designs
        .iter()
        .all(|d| d.rewards.iter().all(|r| *r == d.rewards[0]))
    {
        return Err(Error::FlatObjective);
    }
    let r = search.maximize(|b| -choice_kl(designs, b))?;
    Ok(BetaEstimate::from_search(kind, search, r))
}

/// Per-reward M-projection fits of a biased demonstrator, and their spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSpread {
    pub estimates: Vec<f64>,
    pub variance: f64,
}

/// Fits β̂ by M-projection for each reward in `thetas` against the demonstration
/// policy `policy_for(θ)`, and reports the sample variance of the fits.
pub fn beta_variance_over_rewards<F>(
    world: &GridWorld,
    thetas: &[[f64; 4]],
    search: &ScalarSearch,
    mut policy_for: F,
) -> Result<BetaSpread>
where
    F: FnMut(&[f64; 4]) -> Result<TabularPolicy>,
{
    if thetas.len() < 2 {
        return Err(Error::InvalidParameter("need at least two rewards".into()));
    }
    let estimates = thetas
        .iter()
        .map(|t| Ok(fit_beta_mprojection_demo(world, &policy_for(t)?, t, search)?.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaSpread {
        variance: sample_variance(&estimates),
        estimates,
    })
}

/// KL divergence from a demonstrator policy to the β-soft-optimal policy of each candidate.
pub fn kl_to_soft_policies(
    world: &GridWorld,
    policy: &TabularPolicy,
    candidates: &[[f64; 4]],
    beta: f64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate rewards"));
    }
    candidates
        .iter()
        .map(|c| policy_kl(world, policy, &world.soft_solve(c, beta)?))
        .collect()
}
