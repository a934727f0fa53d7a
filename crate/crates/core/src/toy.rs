//! Closed-form toy model comparing demonstrations with comparisons.
//!
//! There are `2N` candidate rewards `θ_i^±`. A demonstration may pick any of
//! `2N(K+1)` choices: per direction two extreme ones worth `±R1` and `2K`
//! conservative ones worth `±R2` under that direction's rewards, and `R3`
//! under any other direction. A comparison offers only `c_i^+` versus `c_i^-`.
//! With a uniform prior, the expected posterior entropy of each feedback type
//! has a closed form, and which type is more informative depends on β.

use serde::{Deserialize, Serialize};

use crate::error::check_beta;
use crate::math::{entropy_of_log_weights, log_space};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyEnvParams {
    n: usize,
    k: usize,
    r: [f64; 3],
}

impl ToyEnvParams {
    /// Requires `n ≥ 1` and `r1 > r2 > r3 > 0`.
    pub fn new(n: usize, k: usize, r1: f64, r2: f64, r3: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one direction".into()));
        }
        if !(r1 > r2 && r2 > r3 && r3 > 0.0 && r1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rewards must satisfy R1 > R2 > R3 > 0, got ({r1}, {r2}, {r3})"
            )));
        }
        Ok(Self { n, k, r: [r1, r2, r3] })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn rewards(&self) -> [f64; 3] {
        self.r
    }

    /// Reward of choice `c` under parameter `t`, with choices indexed
    /// `direction * 2(K+1) + slot` (slot 0: `c^+`, 1: `c^-`, then `K` positive
    /// and `K` negative conservative choices) and parameters `direction * 2 + sign`.
    pub fn reward(&self, c: usize, t: usize) -> f64 {
        let per = 2 * (self.k + 1);
        let (ci, slot) = (c / per, c % per);
        let (tj, minus) = (t / 2, t % 2 == 1);
        let [r1, r2, r3] = self.r;
        if ci != tj {
            return r3;
        }
        match slot {
            0 => if minus { -r1 } else { r1 },
            1 => if minus { r1 } else { -r1 },
            s if s < 2 + self.k => if minus { -r2 } else { r2 },
            _ => if minus { r2 } else { -r2 },
        }
    }

    pub fn n_choices(&self) -> usize {
        2 * self.n * (self.k + 1)
    }

    pub fn n_params(&self) -> usize {
        2 * self.n
    }
}

/// Log-weights `(βa, −βa, βR3 × 2(N−1))` of a posterior over the `2N` parameters.
fn posterior_log_weights(n: usize, a: f64, r3: f64, beta: f64) -> Vec<f64> {
    let mut w = vec![beta * a, -beta * a];
    w.extend(std::iter::repeat(beta * r3).take(2 * (n - 1)));
    w
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln(e^{βa} + e^{−βa} + 2(N−1) e^{βR3})`
fn log_class_mass(n: usize, a: f64, r3: f64, beta: f64) -> f64 {
    let pair = log_add(beta * a, -beta * a);
    if n == 1 {
        pair
    } else {
        log_add(pair, (2.0 * (n as f64 - 1.0)).ln() + beta * r3)
    }
}

pub fn demo_expected_posterior_entropy(p: &ToyEnvParams, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let [r1, r2, r3] = p.r;
    let h_extreme = entropy_of_log_weights(&posterior_log_weights(p.n, r1, r3, beta));
    if p.k == 0 {
        return Ok(h_extreme);
    }
    let h_conservative = entropy_of_log_weights(&posterior_log_weights(p.n, r2, r3, beta));
    let le = log_class_mass(p.n, r1, r3, beta);
    let lc = (p.k as f64).ln() + log_class_mass(p.n, r2, r3, beta);
    let z = log_add(le, lc);
    Ok((le - z).exp() * h_extreme + (lc - z).exp() * h_conservative)
}

pub fn comparison_expected_posterior_entropy(p: &ToyEnvParams, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let r1 = p.r[0];
    let lz = log_add(beta * r1, -beta * r1);
    let mut w = vec![beta * r1 - lz, -beta * r1 - lz];
    w.extend(std::iter::repeat(0.5f64.ln()).take(2 * (p.n - 1)));
    Ok(entropy_of_log_weights(&w))
}

/// Scan resolution and bisection depth for [`find_crossover_beta`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossoverSearch {
    pub low: f64,
    pub high: f64,
    pub scan_points: usize,
    pub iterations: usize,
}

impl Default for CrossoverSearch {
    fn default() -> Self {
        Self {
            low: 1e-3,
            high: 1e3,
            scan_points: 200,
            iterations: 60,
        }
    }
}

/// Entropy gap `demo − comparison`; positive where comparisons are more informative.
pub fn entropy_gap(p: &ToyEnvParams, beta: f64) -> Result<f64> {
    Ok(demo_expected_posterior_entropy(p, beta)? - comparison_expected_posterior_entropy(p, beta)?)
}

/// Smallest β in range where the more informative feedback type flips, located
/// by a log-spaced scan followed by bisection in log space. `None` when the
/// gap never changes sign. Gaps below `1e-12` count as ties, since both
/// entropies vanish together at large β.
pub fn find_crossover_beta(p: &ToyEnvParams, search: &CrossoverSearch) -> Result<Option<f64>> {
    if !(search.low > 0.0 && search.high > search.low && search.scan_points >= 2) {
        return Err(Error::InvalidParameter("crossover range must satisfy 0 < low < high".into()));
    }
    const TIE: f64 = 1e-12;
    let sign = |g: f64| if g > TIE { 1 } else if g < -TIE { -1 } else { 0 };
    let grid = log_space(search.low, search.high, search.scan_points);
    let mut prev: Option<(f64, i32)> = None;
    for &b in &grid {
        let s = sign(entropy_gap(p, b)?);
        if s == 0 {
            continue;
        }
        if let Some((pb, ps)) = prev {
            if ps != s {
                let (mut lo, mut hi) = (pb.ln(), b.ln());
                for _ in 0..search.iterations {
                    let mid = 0.5 * (lo + hi);
                    if sign(entropy_gap(p, mid.exp())?) == ps {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some((0.5 * (lo + hi)).exp()));
            }
        }
        prev = Some((b, s));
    }
    Ok(None)
}

/// One row of a β sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySweepRow {
    pub beta: f64,
    pub demo_entropy: f64,
    pub comp_entropy: f64,
}

pub fn sweep(p: &ToyEnvParams, betas: &[f64]) -> Result<Vec<ToySweepRow>> {
    betas
        .iter()
        .map(|&beta| {
            Ok(ToySweepRow {
                beta,
                demo_entropy: demo_expected_posterior_entropy(p, beta)?,
                comp_entropy: comparison_expected_posterior_entropy(p, beta)?,
            })
        })
        .collect()
}
