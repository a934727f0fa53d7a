//! Active-learning ablation: correct or default β for query selection,
//! crossed with correct or default β for inference.

use rrl_core::active::{active_loop, ActiveConfig};
use rrl_core::belief::Belief;
use rrl_core::bias::{Bias, HumanModel, Responder};
use rrl_core::{rng, BetaByKind, FeedbackKind};
use serde::Serialize;

use crate::config::ActiveAblationConfig;
use crate::error::{HarnessError, Result};
use crate::output::Stat;
use crate::queue::run_ordered;
use crate::sim::SimContext;

const ABLATION: u64 = 0xab1a;

/// Which β map an arm uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Correct,
    Default,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Correct, Arm::Default];

    fn betas(self, cfg: &ActiveAblationConfig) -> BetaByKind {
        match self {
            Arm::Correct => cfg.true_beta,
            Arm::Default => BetaByKind::uniform(cfg.default_beta),
        }
    }
}

/// One round of one seed in one (select, infer) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub select: Arm,
    pub infer: Arm,
    pub seed: u64,
    pub theta_index: usize,
    pub round: usize,
    pub selected_kind: FeedbackKind,
    pub design_id: usize,
    pub eig: f64,
    pub post_entropy: f64,
    pub regret: f64,
    pub mse: f64,
}

/// Aggregates of one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSummary {
    pub select: Arm,
    pub infer: Arm,
    pub seeds: usize,
    pub final_regret_mean: f64,
    pub final_regret_sem: f64,
    pub final_mse_mean: f64,
    pub frac_demonstration: f64,
    pub frac_comparison: f64,
    pub frac_estop: f64,
}

#[derive(Clone, Debug, Default)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub failures: Vec<String>,
    pub cells: usize,
}

impl AblationResult {
    fn cell_rows(&self, select: Arm, infer: Arm) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.select == select && r.infer == infer)
    }

    pub fn summary(&self) -> Vec<AblationSummary> {
        let mut out = Vec::new();
        for select in Arm::BOTH {
            for infer in Arm::BOTH {
                let rows: Vec<&AblationRow> = self.cell_rows(select, infer).collect();
                if rows.is_empty() {
                    continue;
                }
                let last = rows.iter().map(|r| r.round).max().unwrap_or(0);
                let finals: Vec<&&AblationRow> = rows.iter().filter(|r| r.round == last).collect();
                let regret = Stat::of(&finals.iter().map(|r| r.regret).collect::<Vec<_>>());
                let mse = Stat::of(&finals.iter().map(|r| r.mse).collect::<Vec<_>>());
                let frac = |k| rows.iter().filter(|r| r.selected_kind == k).count() as f64 / rows.len() as f64;
                out.push(AblationSummary {
                    select,
                    infer,
                    seeds: finals.len(),
                    final_regret_mean: regret.mean,
                    final_regret_sem: regret.sem,
                    final_mse_mean: mse.mean,
                    frac_demonstration: frac(FeedbackKind::Demonstration),
                    frac_comparison: frac(FeedbackKind::Comparison),
                    frac_estop: frac(FeedbackKind::EStop),
                });
            }
        }
        out
    }

    pub fn cell(&self, select: Arm, infer: Arm) -> Option<AblationSummary> {
        self.summary().into_iter().find(|s| s.select == select && s.infer == infer)
    }
}

/// Runs the 2×2 ablation. Within a seed every cell faces the same true reward
/// and the same responder stream.
pub fn run_active_ablation(
    cfg: &ActiveAblationConfig,
    sink: &mut dyn FnMut(&[AblationRow]) -> Result<()>,
) -> Result<AblationResult> {
    if cfg.rounds == 0 || cfg.seeds.is_empty() {
        return Err(HarnessError::Config("need at least one round and one seed".into()));
    }
    cfg.true_beta.validate()?;
    let ctx = SimContext::new(&cfg.sim)?;
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for select in Arm::BOTH {
            for infer in Arm::BOTH {
                jobs.push((seed, select, infer));
            }
        }
    }
    let prior = Belief::uniform(&ctx.grid);
    let truth = HumanModel {
        beta: cfg.true_beta,
        bias: Bias::None,
    };
    let mut result = AblationResult {
        cells: jobs.len(),
        ..Default::default()
    };
    let mut sink_err = None;
    run_ordered(
        &jobs,
        ctx.settings.threads,
        |_, &(seed, select, infer)| -> Result<Vec<AblationRow>> {
            let mut r = rng::stream(cfg.sim.env_seed, &[ABLATION, seed]);
            let theta_index = rand::Rng::random_range(&mut r, 0..ctx.grid.len());
            let theta = *ctx.grid.point(theta_index);
            let active = ActiveConfig {
                beta_select: select.betas(cfg),
                beta_infer: infer.betas(cfg),
                demo_eig_samples: cfg.demo_eig_samples,
                comparison_rollouts: cfg.comparison_rollouts,
                estop_rollouts: cfg.estop_rollouts,
                max_demo_starts: cfg.max_demo_starts,
                pool_beta: cfg.pool_beta,
                support_size: cfg.support_size,
                support_tolerance: cfg.support_tolerance,
                kinds: cfg.kinds.clone(),
                seed: rng::derive(cfg.sim.env_seed, &[ABLATION, seed, 1]),
            };
            let mut responder = Responder::new(truth.clone(), rng::derive(cfg.sim.env_seed, &[ABLATION, seed, 2]))?;
            let trace = active_loop(&ctx.world, &ctx.grid, &prior, &mut responder, &theta, &active, cfg.rounds)?;
            Ok(trace
                .rounds
                .into_iter()
                .map(|l| AblationRow {
                    select,
                    infer,
                    seed,
                    theta_index,
                    round: l.round,
                    selected_kind: l.selected_kind,
                    design_id: l.design_id,
                    eig: l.eig,
                    post_entropy: l.post_entropy,
                    regret: l.regret,
                    mse: l.mse,
                })
                .collect())
        },
        |i, out| match out {
            Ok(rows) => {
                if sink_err.is_none() {
                    sink_err = sink(&rows).err();
                }
                result.rows.extend(rows);
            }
            Err(e) => {
                let (seed, s, inf) = jobs[i];
                result.failures.push(format!("seed {seed} select {s:?} infer {inf:?}: {e}"));
            }
        },
    );
    match sink_err {
        Some(e) => Err(e),
        None => Ok(result),
    }
}
