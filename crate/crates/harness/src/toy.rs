//! Expected posterior entropy of demonstrations and comparisons in the
//! analytical toy environment, swept over β.

use rrl_core::math::log_space;
use rrl_core::toy::{find_crossover_beta, sweep, CrossoverSearch, ToyEnvParams, ToySweepRow};
use serde::Serialize;

use crate::config::ToyConfig;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToySummary {
    pub n: usize,
    pub k: usize,
    pub crossover_beta: Option<f64>,
}

pub fn run_toy(cfg: &ToyConfig) -> Result<(Vec<ToySweepRow>, ToySummary)> {
    if !(cfg.beta_low > 0.0 && cfg.beta_high > cfg.beta_low && cfg.points >= 2) {
        return Err(HarnessError::Config("toy β range must satisfy 0 < low < high with ≥ 2 points".into()));
    }
    let [r1, r2, r3] = cfg.rewards;
    let p = ToyEnvParams::new(cfg.n, cfg.k, r1, r2, r3)?;
    let rows = sweep(&p, &log_space(cfg.beta_low, cfg.beta_high, cfg.points))?;
    let crossover = find_crossover_beta(
        &p,
        &CrossoverSearch {
            low: cfg.beta_low,
            high: cfg.beta_high,
            ..Default::default()
        },
    )?;
    Ok((
        rows,
        ToySummary {
            n: cfg.n,
            k: cfg.k,
            crossover_beta: crossover,
        },
    ))
}
