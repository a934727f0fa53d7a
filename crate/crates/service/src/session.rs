//! Session state machine. Everything here is synchronous and independent of
//! HTTP, so replay and tests drive it directly.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rrl_core::active::{select_for_round, ActiveConfig};
use rrl_core::belief::{Belief, RegretEvaluator};
use rrl_core::beta_fit::{fit_beta_mle, BetaEstimate, CalibrationItem, CalibrationSet};
use rrl_core::math::ScalarSearch;
use rrl_core::mdp::{sample_trajectory, Cell, GridWorld, Trajectory};
use rrl_core::reward::RewardGrid;
use rrl_core::{rng, BetaByKind, FeedbackKind, FeedbackQuery, FeedbackResponse};
use serde::{Deserialize, Serialize};

use crate::config::{PlanItem, SessionConfig};
use crate::error::ApiError;

const REWARDS: u64 = 0x7265;
const CALIBRATION: u64 = 0xca1;
const ACTIVE: u64 = 0xac7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Calibration,
    Inference,
    Complete,
}

/// One accepted answer. The log is append-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub query_id: String,
    pub phase: Phase,
    /// Calibration schedule slot, for calibration answers.
    pub item: Option<PlanItem>,
    pub response: FeedbackResponse,
    /// Client-side per-step timestamps of a demonstration, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_times_ms: Option<Vec<f64>>,
    pub received_ms: u64,
}

/// The query currently awaiting an answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub id: String,
    pub phase: Phase,
    pub query: FeedbackQuery,
    pub item: Option<PlanItem>,
    pub eig: Option<f64>,
}

/// Persisted session document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub id: String,
    pub config: SessionConfig,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub phase: Phase,
    pub calibration_rewards: Vec<[f64; 4]>,
    pub log: Vec<LogEntry>,
    pub beta_hat: Vec<BetaEstimate>,
    /// Frozen β map used for selection and inference.
    pub betas: Option<BetaByKind>,
    pub belief: Belief,
    pub outstanding: Option<PendingQuery>,
    /// Regret of the posterior mean against `hidden_theta`, when configured.
    pub regret: Option<f64>,
}

/// Client answer to the outstanding query: either a full response or a
/// discrete choice index for comparisons and e-stops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub query_id: String,
    #[serde(default)]
    pub response: Option<FeedbackResponse>,
    #[serde(default)]
    pub choice: Option<usize>,
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
    #[serde(default)]
    pub step_times_ms: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub index: usize,
    pub theta: [f64; 4],
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub phase: Phase,
    pub responses: usize,
    pub entropy: f64,
    pub posterior_mean: [f64; 4],
    pub top_k: Vec<TopEntry>,
    pub beta_hat: Vec<BetaEstimate>,
    pub betas: Option<BetaByKind>,
    pub regret: Option<f64>,
}

/// What GET query returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum QueryView {
    Pending(QueryPayload),
    Complete { belief: BeliefSummary },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub query_id: String,
    pub phase: Phase,
    pub kind: FeedbackKind,
    pub query: FeedbackQuery,
    /// Position in the calibration schedule or inference round.
    pub position: usize,
    pub total: usize,
    /// Known reward shown during calibration.
    pub reward_legend: Option<[f64; 4]>,
    /// Cell paths of the design's trajectories.
    pub traces: Vec<Vec<Cell>>,
    /// Steps spent on each color, per trajectory.
    pub color_counts: Vec<[usize; 4]>,
    pub eig: Option<f64>,
}

/// Hold-one-out fit for one calibration reward and kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldOutRow {
    pub reward: usize,
    pub kind: FeedbackKind,
    /// β̂ fitted on the other rewards' calibration data.
    pub beta_hat: f64,
    pub at_boundary: bool,
    pub default_beta: f64,
    /// Regret of the posterior mean inferred from this reward's data.
    pub regret_fitted: f64,
    pub regret_default: f64,
}

/// A session with its derived world and reward grid.
#[derive(Clone, Debug)]
pub struct Session {
    pub doc: SessionDoc,
    world: GridWorld,
    grid: RewardGrid,
}

fn search() -> ScalarSearch {
    ScalarSearch::default()
}

impl Session {
    pub fn create(id: String, config: SessionConfig, now_ms: u64) -> Result<Self, ApiError> {
        config.validate()?;
        let world = config.world.build()?;
        let grid = RewardGrid::with_size(config.grid_seed, config.grid_size);
        let calibration_rewards = if config.calibrates() {
            let mut r = rng::stream(config.seed, &[REWARDS]);
            let n = config.calibration.rewards.min(grid.len());
            sample_indices(&mut r, grid.len(), n).iter().map(|i| *grid.point(i)).collect()
        } else {
            Vec::new()
        };
        let mut s = Self {
            doc: SessionDoc {
                id,
                created_ms: now_ms,
                updated_ms: now_ms,
                phase: Phase::Calibration,
                calibration_rewards,
                log: Vec::new(),
                beta_hat: Vec::new(),
                betas: None,
                belief: Belief::uniform(&grid),
                outstanding: None,
                regret: None,
                config,
            },
            world,
            grid,
        };
        if !s.doc.config.calibrates() {
            s.finish_calibration()?;
        }
        Ok(s)
    }

    /// Rebuilds a session from a persisted document, re-deriving its state from
    /// the log. Fails if the stored state disagrees with the replay.
    pub fn restore(doc: SessionDoc) -> Result<Self, ApiError> {
        let replayed = Self::replay(&doc)?;
        if replayed.doc.belief.log_weights.iter().map(|w| w.to_bits()).ne(doc.belief.log_weights.iter().map(|w| w.to_bits()))
            || replayed.doc.phase != doc.phase
            || replayed.doc.betas != doc.betas
        {
            return Err(ApiError::internal(format!("session {} does not match its replay", doc.id)));
        }
        let mut s = replayed;
        s.doc.updated_ms = doc.updated_ms;
        s.doc.outstanding = doc.outstanding;
        Ok(s)
    }

    /// Re-applies every logged answer to a fresh session.
    pub fn replay(doc: &SessionDoc) -> Result<Self, ApiError> {
        let mut s = Self::create(doc.id.clone(), doc.config.clone(), doc.created_ms)?;
        for e in &doc.log {
            s.ensure_outstanding()?;
            let pending = s.doc.outstanding.clone().expect("ensured");
            if pending.id != e.query_id {
                return Err(ApiError::internal(format!("log entry {} is out of order", e.query_id)));
            }
            s.apply(e.clone(), e.received_ms)?;
        }
        Ok(s)
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn grid(&self) -> &RewardGrid {
        &self.grid
    }

    fn plan(&self) -> Vec<PlanItem> {
        self.doc.config.calibration.items()
    }

    fn calibration_answers(&self) -> usize {
        self.doc.log.iter().filter(|e| e.phase == Phase::Calibration).count()
    }

    fn inference_answers(&self) -> usize {
        self.doc.log.iter().filter(|e| e.phase == Phase::Inference).count()
    }

    /// Selection and inference settings with the frozen β map.
    pub fn active_config(&self) -> Option<ActiveConfig> {
        let betas = self.doc.betas?;
        let i = &self.doc.config.inference;
        Some(ActiveConfig {
            beta_select: betas,
            beta_infer: betas,
            demo_eig_samples: i.demo_eig_samples,
            comparison_rollouts: i.comparison_rollouts,
            estop_rollouts: i.estop_rollouts,
            max_demo_starts: i.max_demo_starts,
            pool_beta: i.pool_beta,
            support_size: i.support_size,
            support_tolerance: i.support_tolerance,
            kinds: i.kinds.clone(),
            seed: rng::derive(self.doc.config.seed, &[ACTIVE]),
        })
    }

    fn rollout<R: Rng>(&self, rng: &mut R) -> Result<Trajectory, ApiError> {
        let theta = self.grid.point(rng.random_range(0..self.grid.len()));
        let sol = self.world.soft_solve(theta, self.doc.config.calibration.design_beta)?;
        let starts = self.world.start_cells();
        let start = starts[rng.random_range(0..starts.len())];
        Ok(sample_trajectory(&self.world, &sol.policy, start, rng))
    }

    fn calibration_query(&self, index: usize, item: PlanItem) -> Result<FeedbackQuery, ApiError> {
        let mut r = rng::stream(self.doc.config.seed, &[CALIBRATION, index as u64]);
        Ok(match item.kind {
            FeedbackKind::Demonstration => {
                let starts = self.world.start_cells();
                FeedbackQuery::Demonstration(starts[r.random_range(0..starts.len())])
            }
            FeedbackKind::Comparison => FeedbackQuery::Comparison(self.rollout(&mut r)?, self.rollout(&mut r)?),
            FeedbackKind::EStop => FeedbackQuery::EStop(self.rollout(&mut r)?),
        })
    }

    /// Computes the outstanding query if none is set. No-op once complete.
    pub fn ensure_outstanding(&mut self) -> Result<(), ApiError> {
        if self.doc.outstanding.is_some() || self.doc.phase == Phase::Complete {
            return Ok(());
        }
        let pending = match self.doc.phase {
            Phase::Calibration => {
                let i = self.calibration_answers();
                let item = self.plan()[i];
                PendingQuery {
                    id: format!("cal-{i}"),
                    phase: Phase::Calibration,
                    query: self.calibration_query(i, item)?,
                    item: Some(item),
                    eig: None,
                }
            }
            Phase::Inference => {
                let round = self.inference_answers();
                let cfg = self.active_config().expect("inference has a β map");
                let sel = select_for_round(&self.world, &self.grid, &self.doc.belief, &cfg, round)?;
                PendingQuery {
                    id: format!("inf-{round}"),
                    phase: Phase::Inference,
                    query: sel.query,
                    item: None,
                    eig: Some(sel.eig),
                }
            }
            Phase::Complete => unreachable!(),
        };
        self.doc.outstanding = Some(pending);
        Ok(())
    }

    pub fn query_view(&mut self) -> Result<QueryView, ApiError> {
        self.ensure_outstanding()?;
        let Some(p) = &self.doc.outstanding else {
            return Ok(QueryView::Complete {
                belief: self.belief_summary(5)?,
            });
        };
        let trajs: Vec<&Trajectory> = match &p.query {
            FeedbackQuery::Demonstration(_) => vec![],
            FeedbackQuery::Comparison(a, b) => vec![a, b],
            FeedbackQuery::EStop(t) => vec![t],
        };
        let (position, total) = match p.phase {
            Phase::Calibration => (self.calibration_answers(), self.plan().len()),
            _ => (self.inference_answers(), self.doc.config.inference.rounds),
        };
        Ok(QueryView::Pending(QueryPayload {
            query_id: p.id.clone(),
            phase: p.phase,
            kind: p.query.kind(),
            reward_legend: p.item.map(|it| self.doc.calibration_rewards[it.reward]),
            traces: trajs.iter().map(|t| t.cells().to_vec()).collect(),
            color_counts: trajs.iter().map(|t| t.color_counts(&self.world)).collect(),
            query: p.query.clone(),
            position,
            total,
            eig: p.eig,
        }))
    }

    fn resolve(&self, pending: &PendingQuery, sub: &Submission) -> Result<FeedbackResponse, ApiError> {
        let given = [sub.response.is_some(), sub.choice.is_some(), sub.trajectory.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(ApiError::invalid_response("give exactly one of response, choice or trajectory"));
        }
        let resp = if let Some(r) = &sub.response {
            if r.query() != pending.query {
                return Err(ApiError::invalid_response("response does not answer the outstanding query"));
            }
            r.clone()
        } else if let Some(c) = sub.choice {
            FeedbackResponse::from_choice(&pending.query, c).map_err(|e| ApiError::invalid_response(e.to_string()))?
        } else {
            let FeedbackQuery::Demonstration(start) = pending.query else {
                return Err(ApiError::invalid_response("trajectories answer demonstration queries only"));
            };
            FeedbackResponse::Demonstration {
                design: start,
                choice: sub.trajectory.clone().expect("checked"),
            }
        };
        resp.validate(&self.world).map_err(|e| ApiError::invalid_response(e.to_string()))?;
        if let Some(ts) = &sub.step_times_ms {
            if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(ApiError::invalid_response("step timestamps must be finite and non-decreasing"));
            }
        }
        Ok(resp)
    }

    /// Accepts an answer. Re-sending an already accepted answer is a no-op.
    pub fn submit(&mut self, sub: &Submission, now_ms: u64) -> Result<BeliefSummary, ApiError> {
        if let Some(prev) = self.doc.log.iter().find(|e| e.query_id == sub.query_id) {
            let pending = PendingQuery {
                id: prev.query_id.clone(),
                phase: prev.phase,
                query: prev.response.query(),
                item: prev.item,
                eig: None,
            };
            let same = self.resolve(&pending, sub).is_ok_and(|r| r == prev.response);
            return if same {
                self.belief_summary(5)
            } else {
                Err(ApiError::conflict(format!("query {} was already answered differently", sub.query_id)))
            };
        }
        if self.doc.phase == Phase::Complete {
            return Err(ApiError::complete());
        }
        self.ensure_outstanding()?;
        let pending = self.doc.outstanding.clone().expect("ensured");
        if pending.id != sub.query_id {
            return Err(ApiError::stale(format!(
                "query {} is not outstanding (expected {})",
                sub.query_id, pending.id
            )));
        }
        let response = self.resolve(&pending, sub)?;
        let entry = LogEntry {
            query_id: pending.id,
            phase: pending.phase,
            item: pending.item,
            response,
            step_times_ms: sub.step_times_ms.clone(),
            received_ms: now_ms,
        };
        self.apply(entry, now_ms)?;
        self.belief_summary(5)
    }

    /// Appends a validated entry for the outstanding query and advances state.
    fn apply(&mut self, entry: LogEntry, now_ms: u64) -> Result<(), ApiError> {
        let phase = entry.phase;
        let response = entry.response.clone();
        self.doc.log.push(entry);
        self.doc.outstanding = None;
        self.doc.updated_ms = now_ms;
        match phase {
            Phase::Calibration => {
                if self.calibration_answers() == self.plan().len() {
                    self.finish_calibration()?;
                }
            }
            Phase::Inference => {
                let betas = self.doc.betas.expect("inference has a β map");
                self.doc.belief = self.doc.belief.update(&self.world, &self.grid, &[response], &betas)?;
                if let Some(theta) = &self.doc.config.hidden_theta {
                    let mean = self.doc.belief.posterior_mean(&self.grid)?;
                    self.doc.regret = Some(RegretEvaluator::new(&self.world, theta)?.regret(&mean)?);
                }
                if self.inference_answers() >= self.doc.config.inference.rounds {
                    self.doc.phase = Phase::Complete;
                }
            }
            Phase::Complete => return Err(ApiError::complete()),
        }
        Ok(())
    }

    fn calibration_set(&self, kind: FeedbackKind, keep: impl Fn(usize) -> bool) -> Option<CalibrationSet> {
        let items: Vec<CalibrationItem> = self
            .doc
            .log
            .iter()
            .filter_map(|e| {
                let it = e.item?;
                (it.kind == kind && keep(it.reward)).then(|| CalibrationItem {
                    theta: self.doc.calibration_rewards[it.reward],
                    response: e.response.clone(),
                })
            })
            .collect();
        CalibrationSet::new(items).ok()
    }

    /// Fits and freezes β̂ per calibrated kind, then opens inference.
    fn finish_calibration(&mut self) -> Result<(), ApiError> {
        let cfg = &self.doc.config;
        let mut betas = BetaByKind::uniform(cfg.default_beta.unwrap_or(1.0));
        let mut fits = Vec::new();
        if cfg.calibrates() {
            for &kind in &cfg.calibration.kinds {
                let set = self.calibration_set(kind, |_| true).expect("every calibrated kind has answers");
                let est = fit_beta_mle(&self.world, &set, &search())?;
                betas.set(kind, est.value);
                fits.push(est);
            }
        }
        self.doc.beta_hat = fits;
        self.doc.betas = Some(betas);
        self.doc.phase = if self.doc.config.inference.rounds == 0 {
            Phase::Complete
        } else {
            Phase::Inference
        };
        Ok(())
    }

    pub fn belief_summary(&self, k: usize) -> Result<BeliefSummary, ApiError> {
        let b = &self.doc.belief;
        Ok(BeliefSummary {
            phase: self.doc.phase,
            responses: self.doc.log.len(),
            entropy: b.entropy(),
            posterior_mean: b.posterior_mean(&self.grid)?,
            top_k: b
                .top_k(k)
                .into_iter()
                .map(|(index, weight)| TopEntry {
                    index,
                    theta: *self.grid.point(index),
                    weight,
                })
                .collect(),
            beta_hat: self.doc.beta_hat.clone(),
            betas: self.doc.betas,
            regret: self.doc.regret,
        })
    }

    /// For each calibration reward and kind: β̂ from the other rewards' data,
    /// and the regret of inferring this reward from its own data with that β̂
    /// versus the default β.
    pub fn hold_one_out(&self) -> Result<Vec<HoldOutRow>, ApiError> {
        if self.doc.phase == Phase::Calibration {
            return Err(ApiError::conflict("calibration is not finished"));
        }
        let cfg = &self.doc.config;
        if self.doc.calibration_rewards.len() < 2 {
            return Err(ApiError::conflict("hold-one-out needs at least two calibration rewards"));
        }
        let default_beta = cfg.default_beta.unwrap_or(1.0);
        let prior = Belief::uniform(&self.grid);
        let mut rows = Vec::new();
        for (r, theta) in self.doc.calibration_rewards.iter().enumerate() {
            let eval = RegretEvaluator::new(&self.world, theta)?;
            for &kind in &cfg.calibration.kinds {
                let (Some(others), Some(own)) =
                    (self.calibration_set(kind, |x| x != r), self.calibration_set(kind, |x| x == r))
                else {
                    continue;
                };
                let est = fit_beta_mle(&self.world, &others, &search())?;
                let responses: Vec<FeedbackResponse> = own.items.into_iter().map(|i| i.response).collect();
                let regret_at = |beta: f64| -> Result<f64, ApiError> {
                    let post = prior.update(&self.world, &self.grid, &responses, &BetaByKind::uniform(beta))?;
                    Ok(eval.regret(&post.posterior_mean(&self.grid)?)?)
                };
                rows.push(HoldOutRow {
                    reward: r,
                    kind,
                    beta_hat: est.value,
                    at_boundary: est.at_boundary,
                    default_beta,
                    regret_fitted: regret_at(est.value)?,
                    regret_default: regret_at(default_beta)?,
                });
            }
        }
        Ok(rows)
    }
}
