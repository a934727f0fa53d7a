//! Exact posteriors over the reward grid and the evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::bias::HumanModel;
use crate::feedback::{BetaByKind, FeedbackResponse};
use crate::math::{entropy_of_log_weights, log_sum_exp};
use crate::mdp::{hard_value_iteration, GridWorld, TabularPolicy};
use crate::reward::RewardGrid;
use crate::{Error, Result};

/// Normalized log-probabilities over the points of a [`RewardGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    /// Seed of the grid this belief is defined over.
    pub seed: u64,
    /// Zero-probability points serialize as `null`.
    #[serde(with = "neg_inf_as_null")]
    pub log_weights: Vec<f64>,
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|&x| if x == f64::NEG_INFINITY { None } else { Some(x) })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

impl Belief {
    pub fn uniform(grid: &RewardGrid) -> Self {
        let n = grid.len();
        Self {
            seed: grid.seed(),
            log_weights: vec![-(n as f64).ln(); n],
        }
    }

    /// Normalizes arbitrary log-weights.
    pub fn from_log_weights(seed: u64, mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::Empty("belief"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidParameter("log-weights must be finite or -inf".into()));
        }
        let z = log_sum_exp(&log_weights);
        if !z.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        log_weights.iter_mut().for_each(|w| *w -= z);
        Ok(Self { seed, log_weights })
    }

    pub fn point_mass(grid: &RewardGrid, index: usize) -> Self {
        let mut lw = vec![f64::NEG_INFINITY; grid.len()];
        lw[index] = 0.0;
        Self {
            seed: grid.seed(),
            log_weights: lw,
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_log_weights(&self.log_weights)
    }

    fn check_grid(&self, grid: &RewardGrid) -> Result<()> {
        if grid.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "belief has {} weights but the grid has {} points",
                self.len(),
                grid.len()
            )));
        }
        Ok(())
    }

    /// `Σ_i w_i θ_i`, not renormalized.
    pub fn posterior_mean(&self, grid: &RewardGrid) -> Result<[f64; 4]> {
        self.check_grid(grid)?;
        let mut m = [0.0; 4];
        for (lw, p) in self.log_weights.iter().zip(grid.points()) {
            let w = lw.exp();
            for k in 0..4 {
                m[k] += w * p[k];
            }
        }
        Ok(m)
    }

    /// Indices of the `k` heaviest points with their weights, heaviest first
    /// (ties by grid index).
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.log_weights[b].total_cmp(&self.log_weights[a]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.log_weights[i].exp())).collect()
    }

    pub fn argmax(&self) -> usize {
        self.top_k(1)[0].0
    }

    /// Adds per-point log-likelihoods and renormalizes.
    pub fn updated_with(&self, log_likelihoods: &[f64]) -> Result<Self> {
        if log_likelihoods.len() != self.len() {
            return Err(Error::ShapeMismatch("one log-likelihood per grid point".into()));
        }
        if log_likelihoods.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::InvalidParameter("log-likelihood is NaN or +inf".into()));
        }
        let lw: Vec<f64> = self.log_weights.iter().zip(log_likelihoods).map(|(w, l)| w + l).collect();
        Self::from_log_weights(self.seed, lw)
    }

    /// Bayesian update on `responses` under `model`.
    pub fn update_with_model(
        &self,
        world: &GridWorld,
        grid: &RewardGrid,
        responses: &[FeedbackResponse],
        model: &HumanModel,
    ) -> Result<Self> {
        self.check_grid(grid)?;
        if responses.is_empty() {
            return Err(Error::Empty("responses"));
        }
        let ll = model.grid_log_likelihoods(world, grid.points(), responses)?;
        self.updated_with(&ll)
    }

    /// Bayesian update under the unbiased Boltzmann model with one β per kind.
    pub fn update(
        &self,
        world: &GridWorld,
        grid: &RewardGrid,
        responses: &[FeedbackResponse],
        betas: &BetaByKind,
    ) -> Result<Self> {
        self.update_with_model(world, grid, responses, &HumanModel::boltzmann(*betas))
    }
}

/// Normalized regret against a fixed true reward, with the optimal and
/// random baselines computed once.
#[derive(Clone, Debug)]
pub struct RegretEvaluator {
    world: GridWorld,
    true_rewards: Vec<f64>,
    optimal: f64,
    random: f64,
}

impl RegretEvaluator {
    pub fn new(world: &GridWorld, theta_true: &[f64; 4]) -> Result<Self> {
        if theta_true.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteReward);
        }
        let d = world.dynamics();
        let true_rewards = world.transition_rewards(theta_true);
        let opt = hard_value_iteration(d, &true_rewards)?;
        let optimal = crate::mdp::expected_return(d, &opt.policy, &true_rewards)?;
        let random = crate::mdp::expected_return(d, &TabularPolicy::uniform(d), &true_rewards)?;
        if (optimal - random).abs() <= 1e-12 * optimal.abs().max(1.0) {
            return Err(Error::DegenerateRegret);
        }
        Ok(Self {
            world: world.clone(),
            true_rewards,
            optimal,
            random,
        })
    }

    pub fn optimal_return(&self) -> f64 {
        self.optimal
    }

    pub fn random_return(&self) -> f64 {
        self.random
    }

    /// True-reward return of an arbitrary policy.
    pub fn policy_return(&self, policy: &TabularPolicy) -> Result<f64> {
        crate::mdp::expected_return(self.world.dynamics(), policy, &self.true_rewards)
    }

    pub fn regret_of_policy(&self, policy: &TabularPolicy) -> Result<f64> {
        Ok(1.0 - (self.policy_return(policy)? - self.random) / (self.optimal - self.random))
    }

    /// Regret of the greedy policy for `theta_inferred`.
    pub fn regret(&self, theta_inferred: &[f64; 4]) -> Result<f64> {
        if theta_inferred.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteReward);
        }
        let sol = self.world.hard_solve(theta_inferred)?;
        self.regret_of_policy(&sol.policy)
    }
}

/// `1 − (R_inferred − R_random) / (R_true − R_random)` under the true reward.
pub fn normalized_regret(world: &GridWorld, theta_true: &[f64; 4], theta_inferred: &[f64; 4]) -> Result<f64> {
    RegretEvaluator::new(world, theta_true)?.regret(theta_inferred)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> RewardGrid {
        RewardGrid::from_points(1, vec![[1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn bayes_on_two_atoms() {
        let g = two_point();
        let b = Belief::uniform(&g).updated_with(&[0.8f64.ln(), 0.2f64.ln()]).unwrap();
        let w = b.weights();
        assert!((w[0] - 0.8).abs() < 1e-12 && (w[1] - 0.2).abs() < 1e-12);
        assert_eq!(Belief::uniform(&g).posterior_mean(&g).unwrap(), [0.0; 4]);
    }

    #[test]
    fn degenerate_posterior_is_an_error() {
        let g = two_point();
        let r = Belief::uniform(&g).updated_with(&[f64::NEG_INFINITY; 2]);
        assert!(matches!(r, Err(Error::DegeneratePosterior)));
    }

    #[test]
    fn entropy_and_summaries() {
        let g = RewardGrid::generate(3);
        let u = Belief::uniform(&g);
        assert!((u.entropy() - 1000f64.ln()).abs() < 1e-9);
        let p = Belief::point_mass(&g, 17);
        assert_eq!(p.entropy(), 0.0);
        assert_eq!(p.top_k(1), vec![(17, 1.0)]);
        assert_eq!(p.posterior_mean(&g).unwrap(), *g.point(17));
        let json = serde_json::to_value(&u).unwrap();
        assert_eq!(json["seed"], 3);
        assert_eq!(json["log_weights"].as_array().unwrap().len(), 1000);
    }
}
