//! Fitted / Default / Oracle sweeps over the true β or the bias of the
//! simulated human.

use rrl_core::bias::{Bias, HumanModel};
use rrl_core::FeedbackKind;
use serde::Serialize;

use crate::config::{truth_model, BiasSweepConfig, BoltzmannSweepConfig, Method};
use crate::error::{HarnessError, Result};
use crate::output::Stat;
use crate::queue::run_ordered;
use crate::sim::{run_cell, SimContext};

/// One method's result in one (cell, kind, reward, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: String,
    pub kind: FeedbackKind,
    pub reward_index: usize,
    pub seed: u64,
    pub theta_index: usize,
    pub method: Method,
    pub beta_used: f64,
    pub beta_hat: Option<f64>,
    pub beta_hat_at_boundary: Option<bool>,
    pub regret: f64,
    pub mse: f64,
}

/// Aggregate over rewards and seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub cell: String,
    pub kind: FeedbackKind,
    pub method: Method,
    pub n: usize,
    pub regret_mean: f64,
    pub regret_sem: f64,
    pub mse_mean: f64,
    pub mse_sem: f64,
    pub beta_used_mean: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
    pub cells: usize,
}

impl SweepResult {
    /// Rows of one (cell, kind, method) group.
    pub fn select(&self, cell: &str, kind: FeedbackKind, method: Method) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.cell == cell && r.kind == kind && r.method == method)
            .collect()
    }

    pub fn regret(&self, cell: &str, kind: FeedbackKind, method: Method) -> Stat {
        Stat::of(&self.select(cell, kind, method).iter().map(|r| r.regret).collect::<Vec<_>>())
    }

    /// Groups in order of first appearance.
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut keys: Vec<(String, FeedbackKind, Method)> = Vec::new();
        for r in &self.rows {
            let k = (r.cell.clone(), r.kind, r.method);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(cell, kind, method)| {
                let g = self.select(&cell, kind, method);
                let col = |f: fn(&SweepRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (regret, mse) = (Stat::of(&col(|r| r.regret)), Stat::of(&col(|r| r.mse)));
                SweepSummary {
                    n: g.len(),
                    regret_mean: regret.mean,
                    regret_sem: regret.sem,
                    mse_mean: mse.mean,
                    mse_sem: mse.sem,
                    beta_used_mean: Stat::of(&col(|r| r.beta_used)).mean,
                    cell,
                    kind,
                    method,
                }
            })
            .collect()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failures.first() {
            None => Ok(self),
            Some(first) => Err(HarnessError::CellsFailed {
                failed: self.failures.len(),
                total: self.cells,
                first: first.clone(),
            }),
        }
    }
}

pub fn beta_label(beta: f64) -> String {
    format!("beta={beta}")
}

/// Compact label such as `myopia=0.5` or `myopia=0.5+extremal=0.5`.
pub fn bias_label(bias: &Bias) -> String {
    match bias {
        Bias::None => "none".into(),
        Bias::Myopia(g) => format!("myopia={g}"),
        Bias::Extremal(a) => format!("extremal={a}"),
        Bias::Optimism(t) => format!("optimism={t}"),
        Bias::Composite(parts) => parts.iter().map(bias_label).collect::<Vec<_>>().join("+"),
    }
}

struct Job {
    cell: String,
    truth: HumanModel,
    kind: FeedbackKind,
    reward: usize,
    seed: u64,
}

fn run_jobs(
    ctx: &SimContext,
    jobs: Vec<Job>,
    methods: &[Method],
    default_beta: f64,
    sink: &mut dyn FnMut(&[SweepRow]) -> Result<()>,
) -> Result<SweepResult> {
    let mut result = SweepResult {
        cells: jobs.len(),
        ..Default::default()
    };
    let mut sink_err = None;
    run_ordered(
        &jobs,
        ctx.settings.threads,
        |_, j| run_cell(ctx, j.kind, &j.truth, methods, default_beta, j.reward, j.seed, 0),
        |i, out| {
            let j = &jobs[i];
            match out {
                Ok(c) => {
                    let rows: Vec<SweepRow> = c
                        .methods
                        .iter()
                        .map(|m| SweepRow {
                            cell: j.cell.clone(),
                            kind: j.kind,
                            reward_index: j.reward,
                            seed: j.seed,
                            theta_index: c.theta_index,
                            method: m.method,
                            beta_used: m.beta_used,
                            beta_hat: c.beta_hat.map(|b| b.value),
                            beta_hat_at_boundary: c.beta_hat.map(|b| b.at_boundary),
                            regret: m.regret,
                            mse: m.mse,
                        })
                        .collect();
                    if sink_err.is_none() {
                        sink_err = sink(&rows).err();
                    }
                    result.rows.extend(rows);
                }
                Err(e) => result.failures.push(format!(
                    "{} {} reward {} seed {}: {e}",
                    j.cell, j.kind, j.reward, j.seed
                )),
            }
        },
    );
    match sink_err {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn check_methods(methods: &[Method], default_beta: f64) -> Result<()> {
    if methods.is_empty() {
        return Err(HarnessError::Config("no methods requested".into()));
    }
    if !(default_beta.is_finite() && default_beta >= 0.0) {
        return Err(HarnessError::Config("default_beta must be finite and non-negative".into()));
    }
    Ok(())
}

fn expand<'a>(
    ctx: &SimContext,
    cells: impl IntoIterator<Item = (String, HumanModel)>,
    kinds: &'a [FeedbackKind],
) -> Vec<Job> {
    let s = &ctx.settings;
    let mut jobs = Vec::new();
    for (cell, truth) in cells {
        for &kind in kinds {
            for reward in 0..s.n_rewards {
                for &seed in &s.run_seeds {
                    jobs.push(Job {
                        cell: cell.clone(),
                        truth: truth.clone(),
                        kind,
                        reward,
                        seed,
                    });
                }
            }
        }
    }
    jobs
}

/// Boltzmann-rational humans at each true β.
pub fn run_boltzmann_sweep(
    cfg: &BoltzmannSweepConfig,
    sink: &mut dyn FnMut(&[SweepRow]) -> Result<()>,
) -> Result<SweepResult> {
    check_methods(&cfg.methods, cfg.default_beta)?;
    if cfg.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(HarnessError::Config("true betas must be finite and non-negative".into()));
    }
    let ctx = SimContext::new(&cfg.sim)?;
    let cells = cfg.betas.iter().map(|&b| (beta_label(b), truth_model(b, Bias::None)));
    let jobs = expand(&ctx, cells, &cfg.kinds);
    run_jobs(&ctx, jobs, &cfg.methods, cfg.default_beta, sink)
}

/// Biased humans at a fixed β, one cell per bias.
pub fn run_bias_sweep(cfg: &BiasSweepConfig, sink: &mut dyn FnMut(&[SweepRow]) -> Result<()>) -> Result<SweepResult> {
    check_methods(&cfg.methods, cfg.default_beta)?;
    for b in &cfg.biases {
        b.validate()?;
    }
    let ctx = SimContext::new(&cfg.sim)?;
    let cells = cfg.biases.iter().map(|b| (bias_label(b), truth_model(cfg.beta, b.clone())));
    let jobs = expand(&ctx, cells, &cfg.kinds);
    run_jobs(&ctx, jobs, &cfg.methods, cfg.default_beta, sink)
}
