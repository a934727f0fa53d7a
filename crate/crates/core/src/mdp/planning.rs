//! Finite-horizon planners and exact policy evaluation.

use rand::Rng;

use super::trajectory::Trajectory;
use super::world::{Action, Cell, Dynamics, GridWorld};
use crate::error::{check_beta, check_discount};
use crate::math::log_softmax_into;
use crate::{Error, Result};

/// Time-dependent stochastic policy, indexed `[t][s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(horizon: usize, n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for T={horizon}, S={n_states}, A={n_actions}",
                probs.len()
            )));
        }
        for row in probs.chunks(n_actions) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("policy row is not a distribution".into()));
            }
        }
        Ok(Self {
            horizon,
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(dynamics: &Dynamics) -> Self {
        let a = dynamics.n_actions();
        Self {
            horizon: dynamics.horizon(),
            n_states: dynamics.n_states(),
            n_actions: a,
            probs: vec![1.0 / a as f64; dynamics.horizon() * dynamics.n_states() * a],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        let i = (t * self.n_states + s) * self.n_actions;
        &self.probs[i..i + self.n_actions]
    }

    #[inline]
    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[(t * self.n_states + s) * self.n_actions + a]
    }

    fn matches(&self, d: &Dynamics) -> Result<()> {
        if self.horizon != d.horizon() || self.n_states != d.n_states() || self.n_actions != d.n_actions() {
            return Err(Error::ShapeMismatch(format!(
                "policy is T={}, S={}, A={} but the MDP is T={}, S={}, A={}",
                self.horizon,
                self.n_states,
                self.n_actions,
                d.horizon(),
                d.n_states(),
                d.n_actions()
            )));
        }
        Ok(())
    }
}

/// Distortions of the Bellman backup used to plan.
///
/// The standard backup is `Q(s,a) = Σ P(s'|s,a) [R + discount · V(s')]`.
/// `extremal = Some(α)` replaces the bracket with
/// `max(R, (1-α) R + α · discount · V(s'))`; `optimism = Some(τ)` plans under
/// `P̃(s'|s,a) ∝ P(s'|s,a) exp(τ (R + discount · V(s')))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backup {
    pub discount: f64,
    pub extremal: Option<f64>,
    pub optimism: Option<f64>,
}

impl Backup {
    pub const STANDARD: Backup = Backup {
        discount: 1.0,
        extremal: None,
        optimism: None,
    };

    pub fn validate(&self) -> Result<()> {
        check_discount(self.discount)?;
        if let Some(a) = self.extremal {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!("extremal alpha {a} outside [0, 1]")));
            }
        }
        if let Some(t) = self.optimism {
            if !t.is_finite() {
                return Err(Error::InvalidParameter(format!("optimism tau {t} is not finite")));
            }
        }
        Ok(())
    }
}

impl Default for Backup {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Output of soft (Boltzmann) backward induction.
#[derive(Clone, Debug)]
pub struct SoftSolution {
    /// `[t][s][a]`
    pub q: Vec<f64>,
    /// `[t][s]`, `t = 0..=T`, with `V_T = 0`.
    pub v: Vec<f64>,
    /// `log π_t(a|s)`, `[t][s][a]`
    pub log_policy: Vec<f64>,
    pub policy: TabularPolicy,
}

impl SoftSolution {
    #[inline]
    pub fn log_prob(&self, t: usize, s: usize, a: usize) -> f64 {
        let p = &self.policy;
        self.log_policy[(t * p.n_states + s) * p.n_actions + a]
    }

    pub fn q_row(&self, t: usize, s: usize) -> &[f64] {
        let p = &self.policy;
        let i = (t * p.n_states + s) * p.n_actions;
        &self.q[i..i + p.n_actions]
    }

    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.v[t * self.policy.n_states + s]
    }
}

fn check_rewards(d: &Dynamics, rewards: &[f64]) -> Result<()> {
    if rewards.len() != d.n_transitions() {
        return Err(Error::ShapeMismatch(format!(
            "{} rewards for {} transitions",
            rewards.len(),
            d.n_transitions()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFiniteReward);
    }
    Ok(())
}

/// Soft value iteration with the standard undiscounted backup.
///
/// `Q_t(s,a) = E[R + V_{t+1}(s')]`, `π_t(a|s) ∝ exp(β Q_t(s,a))`,
/// `V_t(s) = E_{a∼π}[Q_t(s,a) − log π_t(a|s)]`, `V_T = 0`.
pub fn soft_value_iteration(d: &Dynamics, rewards: &[f64], beta: f64) -> Result<SoftSolution> {
    soft_backward_induction(d, rewards, beta, Backup::STANDARD)
}

/// Soft backward induction under an arbitrary (possibly distorted) backup.
pub fn soft_backward_induction(d: &Dynamics, rewards: &[f64], beta: f64, backup: Backup) -> Result<SoftSolution> {
    check_beta(beta)?;
    check_rewards(d, rewards)?;
    backup.validate()?;
    let (ns, na, horizon) = (d.n_states(), d.n_actions(), d.horizon());
    let mut q = vec![0.0; horizon * ns * na];
    let mut v = vec![0.0; (horizon + 1) * ns];
    let mut log_policy = vec![0.0; horizon * ns * na];
    let mut probs = vec![0.0; horizon * ns * na];
    let mut scaled = vec![0.0; na];
    let mut scratch = Vec::new();
    let uniform_log = -(na as f64).ln();

    for t in (0..horizon).rev() {
        let (v_now, v_next) = v.split_at_mut((t + 1) * ns);
        let v_now = &mut v_now[t * ns..];
        let v_next = &v_next[..ns];
        for s in 0..ns {
            let row = (t * ns + s) * na;
            if d.is_terminal(s) {
                for a in 0..na {
                    log_policy[row + a] = uniform_log;
                    probs[row + a] = 1.0 / na as f64;
                }
                v_now[s] = 0.0;
                continue;
            }
            for a in 0..na {
                q[row + a] = backup_value(d, rewards, v_next, s, a, &backup, &mut scratch);
                scaled[a] = beta * q[row + a];
            }
            log_softmax_into(&scaled, &mut log_policy[row..row + na]);
            let mut value = 0.0;
            for a in 0..na {
                let lp = log_policy[row + a];
                let p = lp.exp();
                probs[row + a] = p;
                if p > 0.0 {
                    value += p * (q[row + a] - lp);
                }
            }
            v_now[s] = value;
        }
    }
    Ok(SoftSolution {
        q,
        v,
        log_policy,
        policy: TabularPolicy {
            horizon,
            n_states: ns,
            n_actions: na,
            probs,
        },
    })
}

#[inline]
fn backup_value(
    d: &Dynamics,
    rewards: &[f64],
    v_next: &[f64],
    s: usize,
    a: usize,
    backup: &Backup,
    scratch: &mut Vec<f64>,
) -> f64 {
    let range = d.range(s, a);
    let next = &d.next_states()[range.clone()];
    let prob = &d.probs()[range.clone()];
    let rew = &rewards[range];
    let g = backup.discount;
    let target = |k: usize| -> f64 {
        let future = g * v_next[next[k]];
        match backup.extremal {
            None => rew[k] + future,
            Some(alpha) => rew[k].max((1.0 - alpha) * rew[k] + alpha * future),
        }
    };
    match backup.optimism {
        None => (0..next.len()).map(|k| prob[k] * target(k)).sum(),
        Some(tau) => {
            scratch.clear();
            scratch.extend((0..next.len()).map(|k| tau * (rew[k] + g * v_next[next[k]])));
            let max = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            let mut acc = 0.0;
            for k in 0..next.len() {
                let w = prob[k] * (scratch[k] - max).exp();
                norm += w;
                acc += w * target(k);
            }
            acc / norm
        }
    }
}

/// Output of hard (Bellman-optimal) backward induction.
#[derive(Clone, Debug)]
pub struct HardSolution {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    /// Deterministic greedy policy, ties broken toward the lowest action index.
    pub policy: TabularPolicy,
}

pub fn hard_value_iteration(d: &Dynamics, rewards: &[f64]) -> Result<HardSolution> {
    check_rewards(d, rewards)?;
    let (ns, na, horizon) = (d.n_states(), d.n_actions(), d.horizon());
    let mut q = vec![0.0; horizon * ns * na];
    let mut v = vec![0.0; (horizon + 1) * ns];
    let mut probs = vec![0.0; horizon * ns * na];
    let mut scratch = Vec::new();
    for t in (0..horizon).rev() {
        let (v_now, v_next) = v.split_at_mut((t + 1) * ns);
        let v_now = &mut v_now[t * ns..];
        let v_next = &v_next[..ns];
        for s in 0..ns {
            let row = (t * ns + s) * na;
            if d.is_terminal(s) {
                probs[row] = 1.0;
                v_now[s] = 0.0;
                continue;
            }
            let mut best = 0;
            for a in 0..na {
                q[row + a] = backup_value(d, rewards, v_next, s, a, &Backup::STANDARD, &mut scratch);
                let tol = 1e-12 * q[row + best].abs().max(1.0);
                if a > 0 && q[row + a] > q[row + best] + tol {
                    best = a;
                }
            }
            probs[row + best] = 1.0;
            v_now[s] = q[row + best];
        }
    }
    Ok(HardSolution {
        q,
        v,
        policy: TabularPolicy {
            horizon,
            n_states: ns,
            n_actions: na,
            probs,
        },
    })
}

/// Exact expected cumulative reward of `policy` from the start distribution,
/// for a non-stationary reward given as a `[t][s][a]` table.
pub fn evaluate_policy(d: &Dynamics, policy: &TabularPolicy, reward: &[f64]) -> Result<f64> {
    let (ns, na) = (d.n_states(), d.n_actions());
    if reward.len() != d.horizon() * ns * na {
        return Err(Error::ShapeMismatch(format!(
            "reward table has {} entries, expected {}",
            reward.len(),
            d.horizon() * ns * na
        )));
    }
    evaluate_policy_with(d, policy, |t, s, a| reward[(t * ns + s) * na + a])
}

/// [`evaluate_policy`] with the reward supplied as a function of `(t, s, a)`.
pub fn evaluate_policy_with<F: FnMut(usize, usize, usize) -> f64>(
    d: &Dynamics,
    policy: &TabularPolicy,
    mut reward: F,
) -> Result<f64> {
    policy.matches(d)?;
    let (ns, na) = (d.n_states(), d.n_actions());
    let mut dist = d.start().to_vec();
    let mut next = vec![0.0; ns];
    let mut total = 0.0;
    for t in 0..d.horizon() {
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            let mass = dist[s];
            if mass == 0.0 || d.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let pa = policy.prob(t, s, a);
                if pa == 0.0 {
                    continue;
                }
                let w = mass * pa;
                total += w * reward(t, s, a);
                let r = d.range(s, a);
                for (&n, &p) in d.next_states()[r.clone()].iter().zip(&d.probs()[r]) {
                    next[n] += w * p;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(total)
}

/// Expected return of `policy` under per-transition rewards.
pub fn expected_return(d: &Dynamics, policy: &TabularPolicy, transition_rewards: &[f64]) -> Result<f64> {
    check_rewards(d, transition_rewards)?;
    let r = d.expected_rewards(transition_rewards);
    let na = d.n_actions();
    evaluate_policy_with(d, policy, |_, s, a| r[s * na + a])
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Roll `policy` forward from `start` under the world's true dynamics until
/// the goal or the horizon.
pub fn sample_trajectory<R: Rng + ?Sized>(
    world: &GridWorld,
    policy: &TabularPolicy,
    start: Cell,
    rng: &mut R,
) -> Trajectory {
    let d = world.dynamics();
    let mut traj = Trajectory::start_at(start);
    let mut s = world.index(start);
    for t in 0..world.horizon() {
        if d.is_terminal(s) {
            break;
        }
        let a = sample_index(policy.row(t, s), rng);
        let s2 = d.sample_next(s, a, rng);
        traj.push(Action::from_index(a).expect("gridworld policies have four actions"), world.cell(s2));
        s = s2;
    }
    traj
}

impl GridWorld {
    pub fn soft_solve(&self, theta: &[f64; 4], beta: f64) -> Result<SoftSolution> {
        soft_value_iteration(self.dynamics(), &self.transition_rewards(theta), beta)
    }

    pub fn hard_solve(&self, theta: &[f64; 4]) -> Result<HardSolution> {
        hard_value_iteration(self.dynamics(), &self.transition_rewards(theta))
    }

    /// Expected return of `policy` under color weights `theta`.
    pub fn policy_return(&self, policy: &TabularPolicy, theta: &[f64; 4]) -> Result<f64> {
        expected_return(self.dynamics(), policy, &self.transition_rewards(theta))
    }
}
