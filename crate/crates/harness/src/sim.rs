//! One simulated study cell: calibrate, collect inference feedback, then infer
//! the reward under each method from the same data.

use rand::Rng;
use rrl_core::belief::{Belief, RegretEvaluator};
use rrl_core::beta_fit::{fit_beta_mle, BetaEstimate, CalibrationItem, CalibrationSet};
use rrl_core::bias::{Bias, HumanModel, Responder};
use rrl_core::math::ScalarSearch;
use rrl_core::mdp::{sample_trajectory, Cell, GridWorld, Trajectory};
use rrl_core::reward::{reward_mse, RewardGrid};
use rrl_core::{rng, BetaByKind, FeedbackKind, FeedbackQuery, FeedbackResponse};

use crate::config::{Method, SimSettings};
use crate::error::Result;

// Stream labels.
const TRUE_REWARD: u64 = 0x7472;
const CALIBRATION: u64 = 0xca1;
const INFERENCE: u64 = 0x1f;
const RESPONDER: u64 = 0x7e5;

/// The world and reward grid shared by every cell of a sweep.
pub struct SimContext {
    pub settings: SimSettings,
    pub world: GridWorld,
    pub grid: RewardGrid,
    pub search: ScalarSearch,
}

impl SimContext {
    pub fn new(settings: &SimSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            world: settings.world()?,
            grid: settings.grid(),
            search: settings.beta_search.search(),
            settings: settings.clone(),
        })
    }

    /// Grid index of the `r`-th true reward.
    pub fn true_reward_index(&self, r: usize) -> usize {
        rng::stream(self.settings.env_seed, &[TRUE_REWARD, r as u64]).random_range(0..self.grid.len())
    }

    fn random_start<R: Rng>(&self, rng: &mut R) -> Cell {
        let starts = self.world.start_cells();
        starts[rng.random_range(0..starts.len())]
    }

    /// Rollout of the soft-optimal policy of a uniformly drawn grid reward.
    fn random_rollout<R: Rng>(&self, rng: &mut R) -> Result<Trajectory> {
        let theta = self.grid.point(rng.random_range(0..self.grid.len()));
        let sol = self.world.soft_solve(theta, self.settings.design_beta)?;
        let start = self.random_start(rng);
        Ok(sample_trajectory(&self.world, &sol.policy, start, rng))
    }

    /// A random design of the given kind.
    pub fn random_design<R: Rng>(&self, kind: FeedbackKind, rng: &mut R) -> Result<FeedbackQuery> {
        Ok(match kind {
            FeedbackKind::Demonstration => FeedbackQuery::Demonstration(self.random_start(rng)),
            FeedbackKind::Comparison => FeedbackQuery::Comparison(self.random_rollout(rng)?, self.random_rollout(rng)?),
            FeedbackKind::EStop => FeedbackQuery::EStop(self.random_rollout(rng)?),
        })
    }

    /// Calibration feedback: `calibration_queries` answers under each of
    /// `calibration_rewards` random known rewards.
    pub fn calibration_set(
        &self,
        kind: FeedbackKind,
        truth: &HumanModel,
        stream_labels: &[u64],
    ) -> Result<CalibrationSet> {
        let s = &self.settings;
        let labels: Vec<u64> = [CALIBRATION].iter().chain(stream_labels).copied().collect();
        let mut rng = rng::stream(s.env_seed, &labels);
        let mut responder = Responder::new(truth.clone(), rng.random())?;
        let mut items = Vec::with_capacity(s.calibration_rewards * s.calibration_queries);
        for _ in 0..s.calibration_rewards {
            let theta = *self.grid.point(rng.random_range(0..self.grid.len()));
            for _ in 0..s.calibration_queries {
                let q = self.random_design(kind, &mut rng)?;
                let response = responder.respond(&self.world, &q, &theta)?;
                items.push(CalibrationItem { theta, response });
            }
        }
        Ok(CalibrationSet::new(items)?)
    }

    pub fn fit(&self, set: &CalibrationSet) -> Result<BetaEstimate> {
        Ok(fit_beta_mle(&self.world, set, &self.search)?)
    }

    /// `inference_queries` answers about the hidden reward.
    pub fn inference_responses(
        &self,
        kind: FeedbackKind,
        truth: &HumanModel,
        theta_true: &[f64; 4],
        stream_labels: &[u64],
    ) -> Result<Vec<FeedbackResponse>> {
        let labels: Vec<u64> = [INFERENCE].iter().chain(stream_labels).copied().collect();
        let mut rng = rng::stream(self.settings.env_seed, &labels);
        let mut responder = Responder::new(truth.clone(), rng::derive(rng.random(), &[RESPONDER]))?;
        (0..self.settings.inference_queries)
            .map(|_| {
                let q = self.random_design(kind, &mut rng)?;
                Ok(responder.respond(&self.world, &q, theta_true)?)
            })
            .collect()
    }

    /// Posterior-mean regret and MSE after updating the uniform prior on `responses`.
    pub fn evaluate(
        &self,
        evaluator: &RegretEvaluator,
        theta_true: &[f64; 4],
        responses: &[FeedbackResponse],
        model: &HumanModel,
    ) -> Result<(f64, f64)> {
        let post = Belief::uniform(&self.grid).update_with_model(&self.world, &self.grid, responses, model)?;
        let mean = post.posterior_mean(&self.grid)?;
        Ok((evaluator.regret(&mean)?, reward_mse(&mean, theta_true)))
    }
}

/// Inference result of one method in one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// β the method assumed for this feedback kind.
    pub beta_used: f64,
    pub regret: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub theta_index: usize,
    pub beta_hat: Option<BetaEstimate>,
    pub methods: Vec<MethodOutcome>,
}

/// Runs one (kind, true model, reward, seed) cell for every requested method,
/// all sharing the same calibration and inference feedback.
pub fn run_cell(
    ctx: &SimContext,
    kind: FeedbackKind,
    truth: &HumanModel,
    methods: &[Method],
    default_beta: f64,
    reward: usize,
    seed: u64,
    cell_label: u64,
) -> Result<CellOutcome> {
    let theta_index = ctx.true_reward_index(reward);
    let theta_true = *ctx.grid.point(theta_index);
    let labels = [cell_label, kind.tie_rank() as u64, reward as u64, seed];
    let beta_hat = if methods.contains(&Method::Fitted) {
        Some(ctx.fit(&ctx.calibration_set(kind, truth, &labels)?)?)
    } else {
        None
    };
    let responses = ctx.inference_responses(kind, truth, &theta_true, &labels)?;
    let evaluator = RegretEvaluator::new(&ctx.world, &theta_true)?;
    let unbiased = |b: f64| HumanModel {
        beta: BetaByKind::uniform(b),
        bias: Bias::None,
    };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let model = match method {
            Method::Fitted => unbiased(beta_hat.expect("fitted when requested").value),
            Method::Default => unbiased(default_beta),
            Method::Oracle => truth.clone(),
            Method::Fixed(b) => unbiased(b),
        };
        let (regret, mse) = ctx.evaluate(&evaluator, &theta_true, &responses, &model)?;
        out.push(MethodOutcome {
            method,
            beta_used: model.beta.get(kind),
            regret,
            mse,
        });
    }
    Ok(CellOutcome {
        theta_index,
        beta_hat,
        methods: out,
    })
}
