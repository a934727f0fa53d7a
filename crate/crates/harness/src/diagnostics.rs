//! Infinite-data β̂ diagnostics for biased demonstrators: the spread of the
//! M-projection fit across rewards, and KL divergences from the biased policy
//! to soft-optimal policies of other candidate rewards.

use rrl_core::beta_fit::{fit_beta_mprojection_demo, kl_to_soft_policies};
use rrl_core::bias::{Bias, HumanModel};
use rrl_core::math::sample_variance;
use rrl_core::reward::reward_mse;
use rrl_core::BetaByKind;
use serde::Serialize;

use crate::config::DiagnosticsConfig;
use crate::error::{HarnessError, Result};
use crate::output::Stat;
use crate::queue::run_ordered;
use crate::sim::SimContext;
use crate::sweeps::bias_label;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaFitRow {
    pub bias: String,
    pub reward_index: usize,
    pub theta_index: usize,
    pub beta_hat: f64,
    pub at_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlRow {
    pub bias: String,
    pub candidate: usize,
    pub theta_index: usize,
    pub is_true: bool,
    /// Mean squared distance from the true reward.
    pub distance: f64,
    /// KL at the β̂ fitted for the true reward.
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsSummary {
    pub bias: String,
    pub beta_hat_mean: f64,
    pub beta_hat_sem: f64,
    pub beta_hat_variance: f64,
    /// Rank of the true reward among the KL candidates (0 = smallest KL).
    pub true_kl_rank: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DiagnosticsResult {
    pub fits: Vec<BetaFitRow>,
    pub kl: Vec<KlRow>,
    pub summary: Vec<DiagnosticsSummary>,
    pub failures: Vec<String>,
}

struct BiasOutput {
    fits: Vec<BetaFitRow>,
    kl: Vec<KlRow>,
    summary: DiagnosticsSummary,
}

fn diagnose(ctx: &SimContext, cfg: &DiagnosticsConfig, bias: &Bias) -> Result<BiasOutput> {
    let label = bias_label(bias);
    let model = HumanModel {
        beta: BetaByKind::uniform(cfg.beta),
        bias: bias.clone(),
    };
    let mut fits = Vec::with_capacity(cfg.n_rewards);
    let mut first = None;
    for r in 0..cfg.n_rewards {
        let idx = ctx.true_reward_index(r);
        let theta = ctx.grid.point(idx);
        let policy = model.demo_policy(&ctx.world, theta)?.policy;
        let est = fit_beta_mprojection_demo(&ctx.world, &policy, theta, &ctx.search)?;
        if r == 0 {
            first = Some((idx, policy, est.value));
        }
        fits.push(BetaFitRow {
            bias: label.clone(),
            reward_index: r,
            theta_index: idx,
            beta_hat: est.value,
            at_boundary: est.at_boundary,
        });
    }
    let (true_idx, policy, beta_hat) = first.expect("n_rewards checked");
    // The true reward first, then evenly strided grid points.
    let stride = (ctx.grid.len() / cfg.kl_candidates.max(1)).max(1);
    let mut indices = vec![true_idx];
    indices.extend((0..ctx.grid.len()).step_by(stride).filter(|&i| i != true_idx).take(cfg.kl_candidates));
    let candidates: Vec<[f64; 4]> = indices.iter().map(|&i| *ctx.grid.point(i)).collect();
    let kls = kl_to_soft_policies(&ctx.world, &policy, &candidates, beta_hat)?;
    let true_kl = kls[0];
    let theta_true = candidates[0];
    let kl = indices
        .iter()
        .zip(&candidates)
        .zip(&kls)
        .enumerate()
        .map(|(c, ((&i, th), &k))| KlRow {
            bias: label.clone(),
            candidate: c,
            theta_index: i,
            is_true: c == 0,
            distance: reward_mse(th, &theta_true),
            kl: k,
        })
        .collect();
    let values: Vec<f64> = fits.iter().map(|f| f.beta_hat).collect();
    let stat = Stat::of(&values);
    let summary = DiagnosticsSummary {
        bias: label,
        beta_hat_mean: stat.mean,
        beta_hat_sem: stat.sem,
        beta_hat_variance: sample_variance(&values),
        true_kl_rank: kls[1..].iter().filter(|&&k| k < true_kl).count(),
    };
    Ok(BiasOutput { fits, kl, summary })
}

/// Runs the diagnostics for every configured bias. Failed biases are reported
/// and skipped.
pub fn run_diagnostics(cfg: &DiagnosticsConfig) -> Result<DiagnosticsResult> {
    if cfg.n_rewards < 2 {
        return Err(HarnessError::Config("diagnostics need at least two rewards".into()));
    }
    if !(cfg.beta.is_finite() && cfg.beta > 0.0) {
        return Err(HarnessError::Config("beta must be positive".into()));
    }
    for b in &cfg.biases {
        b.validate()?;
    }
    let ctx = SimContext::new(&cfg.sim)?;
    let mut out = DiagnosticsResult::default();
    run_ordered(
        &cfg.biases,
        ctx.settings.threads,
        |_, b| diagnose(&ctx, cfg, b),
        |i, r| match r {
            Ok(o) => {
                out.fits.extend(o.fits);
                out.kl.extend(o.kl);
                out.summary.push(o.summary);
            }
            Err(e) => out.failures.push(format!("{}: {e}", bias_label(&cfg.biases[i]))),
        },
    );
    Ok(out)
}
