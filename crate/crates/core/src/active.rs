//! Expected-information-gain query selection.
//!
//! For comparisons and e-stops the expectation over answers is exact. For
//! demonstrations the answer space is every trajectory, so the inner
//! expectation is estimated with a few rollouts per candidate reward.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, RegretEvaluator};
use crate::bias::Responder;
use crate::feedback::{BetaByKind, FeedbackKind, FeedbackQuery, FeedbackResponse};
use crate::math::{entropy, log_softmax_into, log_sum_exp};
use crate::mdp::{sample_index, sample_trajectory, Cell, GridWorld, Trajectory, N_ACTIONS};
use crate::reward::{reward_mse, RewardGrid};
use crate::{rng, Error, Result};

/// Candidate designs, per kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryPool {
    pub demonstrations: Vec<Cell>,
    pub comparisons: Vec<(Trajectory, Trajectory)>,
    pub estops: Vec<Trajectory>,
}

impl QueryPool {
    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty() && self.comparisons.is_empty() && self.estops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len() + self.comparisons.len() + self.estops.len()
    }

    /// All designs in tie-break order: comparisons, e-stops, demonstrations,
    /// each by pool index.
    pub fn queries(&self) -> Vec<(usize, FeedbackQuery)> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(
            self.comparisons
                .iter()
                .enumerate()
                .map(|(i, (a, b))| (i, FeedbackQuery::Comparison(a.clone(), b.clone()))),
        );
        out.extend(self.estops.iter().enumerate().map(|(i, t)| (i, FeedbackQuery::EStop(t.clone()))));
        out.extend(
            self.demonstrations
                .iter()
                .enumerate()
                .map(|(i, c)| (i, FeedbackQuery::Demonstration(*c))),
        );
        out
    }
}

/// Settings of the active loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    /// β used to score designs.
    pub beta_select: BetaByKind,
    /// β used in posterior updates.
    pub beta_infer: BetaByKind,
    /// Rollouts per candidate reward when estimating demonstration EIG.
    pub demo_eig_samples: usize,
    /// Belief-sampled rewards whose rollouts form the comparison pool (all pairs).
    pub comparison_rollouts: usize,
    pub estop_rollouts: usize,
    pub max_demo_starts: usize,
    /// β of the soft policies whose rollouts populate the pools.
    pub pool_beta: f64,
    /// Restrict EIG sums to this many heaviest grid points when the rest
    /// carries less than `support_tolerance` mass.
    pub support_size: usize,
    pub support_tolerance: f64,
    pub kinds: Vec<FeedbackKind>,
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            beta_select: BetaByKind::default(),
            beta_infer: BetaByKind::default(),
            demo_eig_samples: 8,
            comparison_rollouts: 8,
            estop_rollouts: 8,
            max_demo_starts: 16,
            pool_beta: 1.0,
            support_size: 200,
            support_tolerance: 1e-6,
            kinds: FeedbackKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        self.beta_select.validate()?;
        self.beta_infer.validate()?;
        if self.kinds.is_empty() {
            return Err(Error::Empty("feedback kinds"));
        }
        if self.demo_eig_samples == 0 {
            return Err(Error::InvalidParameter("demo_eig_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn eig_options(&self) -> EigOptions {
        EigOptions {
            demo_samples: self.demo_eig_samples,
            support_size: self.support_size,
            support_tolerance: self.support_tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    pub demo_samples: usize,
    pub support_size: usize,
    pub support_tolerance: f64,
}

impl EigOptions {
    /// Sum over every grid point.
    pub fn exact(demo_samples: usize) -> Self {
        Self {
            demo_samples,
            support_size: usize::MAX,
            support_tolerance: 0.0,
        }
    }
}

impl Default for EigOptions {
    fn default() -> Self {
        ActiveConfig::default().eig_options()
    }
}

/// The grid points an EIG computation sums over, with renormalized weights.
#[derive(Clone, Debug)]
pub struct Support {
    pub indices: Vec<usize>,
    pub log_weights: Vec<f64>,
    /// Whether every point with positive mass is included.
    pub exact: bool,
}

impl Support {
    pub fn new(belief: &Belief, opts: &EigOptions) -> Self {
        let positive: Vec<usize> = (0..belief.len())
            .filter(|&i| belief.log_weights[i] > f64::NEG_INFINITY)
            .collect();
        let mut indices = positive.clone();
        let mut exact = true;
        if indices.len() > opts.support_size {
            let top: Vec<usize> = belief.top_k(opts.support_size).into_iter().map(|(i, _)| i).collect();
            let kept: f64 = top.iter().map(|&i| belief.log_weights[i].exp()).sum();
            if 1.0 - kept < opts.support_tolerance {
                indices = top;
                indices.sort_unstable();
                exact = false;
            }
        }
        let lw: Vec<f64> = indices.iter().map(|&i| belief.log_weights[i]).collect();
        let z = log_sum_exp(&lw);
        Self {
            indices,
            log_weights: lw.iter().map(|w| w - z).collect(),
            exact,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Mutual information in its KL form:
/// `Σ_i w_i Σ_y P(y|θ_i) [log P(y|θ_i) − log P(y)]`, from log-weights and
/// the row-per-θ log-likelihood matrix.
pub fn eig_kl_form(log_w: &[f64], log_lik: &[Vec<f64>]) -> f64 {
    let log_py = marginal(log_w, log_lik);
    let mut total = 0.0;
    for (lw, row) in log_w.iter().zip(log_lik) {
        let w = lw.exp();
        if w == 0.0 {
            continue;
        }
        for (l, lp) in row.iter().zip(&log_py) {
            let p = l.exp();
            if p > 0.0 {
                total += w * p * (l - lp);
            }
        }
    }
    total
}

/// Mutual information as expected entropy reduction:
/// `H(P(θ)) − Σ_y P(y) H(P(θ | y))`.
pub fn eig_entropy_form(log_w: &[f64], log_lik: &[Vec<f64>]) -> f64 {
    let log_py = marginal(log_w, log_lik);
    let prior: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
    let mut expected = 0.0;
    let mut post = vec![0.0; log_w.len()];
    for (y, lp) in log_py.iter().enumerate() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        for (i, (lw, row)) in log_w.iter().zip(log_lik).enumerate() {
            post[i] = (lw + row[y] - lp).exp();
        }
        expected += lp.exp() * entropy(&post);
    }
    entropy(&prior) - expected
}

fn marginal(log_w: &[f64], log_lik: &[Vec<f64>]) -> Vec<f64> {
    let n_y = log_lik.first().map_or(0, Vec::len);
    let mut col = vec![0.0; log_w.len()];
    (0..n_y)
        .map(|y| {
            for (i, (lw, row)) in log_w.iter().zip(log_lik).enumerate() {
                col[i] = lw + row[y];
            }
            log_sum_exp(&col)
        })
        .collect()
}

/// `log P(y | θ)` for every support point and every answer of a finite-choice design.
pub fn choice_log_likelihoods(
    world: &GridWorld,
    grid: &RewardGrid,
    support: &Support,
    query: &FeedbackQuery,
    beta: f64,
) -> Result<Vec<Vec<f64>>> {
    let feats = query
        .choice_features(world, 1.0)
        .ok_or_else(|| Error::InvalidParameter("demonstrations have no finite choice set".into()))?;
    let bonus = world.completion_bonus();
    let mut scaled = vec![0.0; feats.len()];
    Ok(support
        .indices
        .iter()
        .map(|&i| {
            let theta = grid.point(i);
            for (s, f) in scaled.iter_mut().zip(&feats) {
                *s = beta * f.value(theta, bonus);
            }
            let mut row = vec![0.0; feats.len()];
            log_softmax_into(&scaled, &mut row);
            row
        })
        .collect())
}

/// Log-policies of every support point, laid out `[t][s][a][j]` so that
/// scoring one trajectory against all candidates walks contiguous memory.
pub struct DemoTables {
    n_support: usize,
    n_states: usize,
    table: Vec<f64>,
}

impl DemoTables {
    pub fn build(world: &GridWorld, grid: &RewardGrid, support: &Support, beta: f64) -> Result<Self> {
        let (ns, horizon, m) = (world.n_states(), world.horizon(), support.len());
        let mut table = vec![0.0; horizon * ns * N_ACTIONS * m];
        for (j, &i) in support.indices.iter().enumerate() {
            let sol = world.soft_solve(grid.point(i), beta)?;
            for (k, lp) in sol.log_policy.iter().enumerate() {
                table[k * m + j] = *lp;
            }
        }
        Ok(Self {
            n_support: m,
            n_states: ns,
            table,
        })
    }

    #[inline]
    fn row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let k = ((t * self.n_states + s) * N_ACTIONS + a) * self.n_support;
        &self.table[k..k + self.n_support]
    }

    /// Samples a demonstration from support point `j`'s policy and accumulates
    /// its log-likelihood under every support point into `acc`.
    fn rollout_into<R: Rng>(&self, world: &GridWorld, j: usize, start: Cell, rng: &mut R, acc: &mut [f64]) {
        acc.iter_mut().for_each(|x| *x = 0.0);
        let d = world.dynamics();
        let mut s = world.index(start);
        let mut probs = [0.0; N_ACTIONS];
        for t in 0..world.horizon() {
            if d.is_terminal(s) {
                break;
            }
            for (a, p) in probs.iter_mut().enumerate() {
                *p = self.row(t, s, a)[j].exp();
            }
            let a = sample_index(&probs, rng);
            for (x, l) in acc.iter_mut().zip(self.row(t, s, a)) {
                *x += l;
            }
            s = d.sample_next(s, a, rng);
        }
    }

    /// Monte Carlo demonstration EIG from `start`:
    /// `Σ_i w_i mean_m [log P(ξ_im | θ_i) − log Σ_j w_j P(ξ_im | θ_j)]`.
    pub fn demo_eig<R: Rng>(&self, world: &GridWorld, support: &Support, start: Cell, samples: usize, rng: &mut R) -> f64 {
        let m = self.n_support;
        let mut acc = vec![0.0; m];
        let mut mix = vec![0.0; m];
        let mut total = 0.0;
        for i in 0..m {
            let w = support.log_weights[i].exp();
            if w == 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for _ in 0..samples {
                self.rollout_into(world, i, start, rng, &mut acc);
                for ((x, a), lw) in mix.iter_mut().zip(&acc).zip(&support.log_weights) {
                    *x = a + lw;
                }
                sum += acc[i] - log_sum_exp(&mix);
            }
            total += w * sum / samples as f64;
        }
        total
    }
}

/// EIG of one design under `beta_select`.
pub fn expected_information_gain<R: Rng>(
    world: &GridWorld,
    grid: &RewardGrid,
    belief: &Belief,
    query: &FeedbackQuery,
    beta_select: &BetaByKind,
    opts: &EigOptions,
    rng: &mut R,
) -> Result<f64> {
    beta_select.validate()?;
    query.validate(world)?;
    let support = Support::new(belief, opts);
    let beta = beta_select.get(query.kind());
    match query {
        FeedbackQuery::Demonstration(start) => {
            let tables = DemoTables::build(world, grid, &support, beta)?;
            Ok(tables.demo_eig(world, &support, *start, opts.demo_samples, rng))
        }
        _ => {
            let ll = choice_log_likelihoods(world, grid, &support, query, beta)?;
            Ok(eig_kl_form(&support.log_weights, &ll).max(0.0))
        }
    }
}

/// A chosen design and its score.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub query: FeedbackQuery,
    pub kind: FeedbackKind,
    pub design_id: usize,
    pub eig: f64,
}

/// Highest-EIG design of the pool, scoring with `cfg.beta_select` only.
pub fn select_query(
    world: &GridWorld,
    grid: &RewardGrid,
    belief: &Belief,
    pool: &QueryPool,
    cfg: &ActiveConfig,
    round: u64,
) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::Empty("query pool"));
    }
    cfg.beta_select.validate()?;
    let opts = cfg.eig_options();
    let support = Support::new(belief, &opts);
    let tables = if pool.demonstrations.is_empty() {
        None
    } else {
        Some(DemoTables::build(world, grid, &support, cfg.beta_select.demo)?)
    };
    let mut best: Option<Selection> = None;
    for (id, query) in pool.queries() {
        let kind = query.kind();
        let eig = match &query {
            FeedbackQuery::Demonstration(start) => {
                let mut r = rng::stream(cfg.seed, &[0xD3, round, id as u64]);
                tables
                    .as_ref()
                    .expect("built for non-empty demo pool")
                    .demo_eig(world, &support, *start, opts.demo_samples, &mut r)
            }
            _ => {
                let ll = choice_log_likelihoods(world, grid, &support, &query, cfg.beta_select.get(kind))?;
                eig_kl_form(&support.log_weights, &ll).max(0.0)
            }
        };
        if best.as_ref().is_none_or(|b| eig > b.eig + 1e-12) {
            best = Some(Selection {
                query,
                kind,
                design_id: id,
                eig,
            });
        }
    }
    Ok(best.expect("pool is non-empty"))
}

/// Draws a grid index from the belief.
fn sample_from_belief<R: Rng>(belief: &Belief, rng: &mut R) -> usize {
    sample_index(&belief.weights(), rng)
}

/// Rolls out the soft-optimal policy of a belief-sampled reward from a random start.
fn belief_rollout<R: Rng>(world: &GridWorld, grid: &RewardGrid, belief: &Belief, beta: f64, rng: &mut R) -> Result<Trajectory> {
    let theta = grid.point(sample_from_belief(belief, rng));
    let sol = world.soft_solve(theta, beta)?;
    let starts = world.start_cells();
    let start = starts[rng.random_range(0..starts.len())];
    Ok(sample_trajectory(world, &sol.policy, start, rng))
}

/// Belief-driven design pool: comparison pairs and e-stop trajectories come
/// from rollouts of rewards sampled from the current belief; demonstration
/// designs are distinct random start cells.
pub fn build_pool(world: &GridWorld, grid: &RewardGrid, belief: &Belief, cfg: &ActiveConfig, rng: &mut ChaCha8Rng) -> Result<QueryPool> {
    let mut pool = QueryPool::default();
    let wants = |k| cfg.kinds.contains(&k);
    if wants(FeedbackKind::Comparison) {
        let trajs = (0..cfg.comparison_rollouts)
            .map(|_| belief_rollout(world, grid, belief, cfg.pool_beta, rng))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..trajs.len() {
            for j in i + 1..trajs.len() {
                pool.comparisons.push((trajs[i].clone(), trajs[j].clone()));
            }
        }
    }
    if wants(FeedbackKind::EStop) {
        for _ in 0..cfg.estop_rollouts {
            pool.estops.push(belief_rollout(world, grid, belief, cfg.pool_beta, rng)?);
        }
    }
    if wants(FeedbackKind::Demonstration) {
        let starts = world.start_cells();
        let n = cfg.max_demo_starts.min(starts.len());
        let mut picked: Vec<usize> = sample_indices(rng, starts.len(), n).into_vec();
        picked.sort_unstable();
        pool.demonstrations = picked.into_iter().map(|i| starts[i]).collect();
    }
    Ok(pool)
}

/// One round of the active loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub selected_kind: FeedbackKind,
    pub design_id: usize,
    pub eig: f64,
    pub response: FeedbackResponse,
    pub post_entropy: f64,
    pub regret: f64,
    pub mse: f64,
}

pub struct ActiveTrace {
    pub beliefs: Vec<Belief>,
    pub rounds: Vec<RoundLog>,
}

/// Builds the round's pool from the belief and picks its highest-EIG design.
/// Deterministic in `(cfg.seed, round, belief)`.
pub fn select_for_round(
    world: &GridWorld,
    grid: &RewardGrid,
    belief: &Belief,
    cfg: &ActiveConfig,
    round: usize,
) -> Result<Selection> {
    let mut pool_rng = rng::stream(cfg.seed, &[0x9001, round as u64]);
    let pool = build_pool(world, grid, belief, cfg, &mut pool_rng)?;
    select_query(world, grid, belief, &pool, cfg, round as u64)
}

/// Select, ask, update, repeat. Regret and MSE of the posterior mean are
/// recorded after every round.
pub fn active_loop(
    world: &GridWorld,
    grid: &RewardGrid,
    prior: &Belief,
    responder: &mut Responder,
    theta_true: &[f64; 4],
    cfg: &ActiveConfig,
    n_rounds: usize,
) -> Result<ActiveTrace> {
    cfg.validate()?;
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("need at least one round".into()));
    }
    let evaluator = RegretEvaluator::new(world, theta_true)?;
    let mut belief = prior.clone();
    let mut beliefs = vec![belief.clone()];
    let mut rounds = Vec::with_capacity(n_rounds);
    for round in 0..n_rounds {
        let sel = select_for_round(world, grid, &belief, cfg, round)?;
        let response = responder.respond(world, &sel.query, theta_true)?;
        belief = belief.update(world, grid, std::slice::from_ref(&response), &cfg.beta_infer)?;
        let mean = belief.posterior_mean(grid)?;
        rounds.push(RoundLog {
            round,
            selected_kind: sel.kind,
            design_id: sel.design_id,
            eig: sel.eig,
            response,
            post_entropy: belief.entropy(),
            regret: evaluator.regret(&mean)?,
            mse: reward_mse(&mean, theta_true),
        });
        beliefs.push(belief.clone());
    }
    Ok(ActiveTrace { beliefs, rounds })
}
