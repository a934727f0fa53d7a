use rrl_core::mdp::GridWorld;
use rrl_core::{rng, FeedbackKind};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Gridworld parameters. The colors are drawn from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSettings {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub slip: f64,
    pub completion_bonus: f64,
}

impl Default for WorldSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 10,
            height: 10,
            horizon: 25,
            slip: 0.1,
            completion_bonus: 250.0,
        }
    }
}

impl WorldSettings {
    pub fn build(&self) -> Result<GridWorld, ApiError> {
        let mut r = rng::stream(self.seed, &[0x776f726c64]);
        GridWorld::random(&mut r, self.width, self.height, self.horizon, self.slip, self.completion_bonus)
            .map_err(|e| ApiError::bad_request(format!("world: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanOrder {
    /// Every block of the first kind, then every block of the next kind.
    #[default]
    Scripted,
    /// Per reward, one block of each kind.
    Interleaved,
}

/// Calibration schedule: `rewards` known rewards, each shown for one block of
/// `block` queries per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationPlan {
    pub rewards: usize,
    pub block: usize,
    pub kinds: Vec<FeedbackKind>,
    pub order: PlanOrder,
    /// β of the soft-optimal rollouts used as comparison and e-stop designs.
    pub design_beta: f64,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        Self {
            rewards: 5,
            block: 5,
            kinds: vec![FeedbackKind::Demonstration, FeedbackKind::Comparison],
            order: PlanOrder::Scripted,
            design_beta: 1.0,
        }
    }
}

/// One scheduled calibration query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub kind: FeedbackKind,
    pub reward: usize,
}

impl CalibrationPlan {
    pub fn items(&self) -> Vec<PlanItem> {
        let mut out = Vec::with_capacity(self.rewards * self.block * self.kinds.len());
        let mut push = |kind, reward| out.extend((0..self.block).map(|_| PlanItem { kind, reward }));
        match self.order {
            PlanOrder::Scripted => {
                for &k in &self.kinds {
                    for r in 0..self.rewards {
                        push(k, r);
                    }
                }
            }
            PlanOrder::Interleaved => {
                for r in 0..self.rewards {
                    for &k in &self.kinds {
                        push(k, r);
                    }
                }
            }
        }
        out
    }
}

/// Active querying after calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    pub rounds: usize,
    pub kinds: Vec<FeedbackKind>,
    pub demo_eig_samples: usize,
    pub comparison_rollouts: usize,
    pub estop_rollouts: usize,
    pub max_demo_starts: usize,
    pub pool_beta: f64,
    pub support_size: usize,
    pub support_tolerance: f64,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            rounds: 10,
            kinds: vec![FeedbackKind::Demonstration, FeedbackKind::Comparison],
            demo_eig_samples: 4,
            comparison_rollouts: 8,
            estop_rollouts: 8,
            max_demo_starts: 4,
            pool_beta: 1.0,
            support_size: 200,
            support_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Requested id; generated when absent.
    pub id: Option<String>,
    pub seed: u64,
    pub world: WorldSettings,
    pub grid_seed: u64,
    pub grid_size: usize,
    pub calibration: CalibrationPlan,
    pub inference: InferenceSettings,
    /// β for inference kinds that calibration does not cover. Setting it with
    /// an empty calibration plan opts out of calibration entirely.
    pub default_beta: Option<f64>,
    /// Known true reward of a study replica; enables regret reporting.
    pub hidden_theta: Option<[f64; 4]>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            id: None,
            seed: 0,
            world: WorldSettings::default(),
            grid_seed: 0,
            grid_size: 1000,
            calibration: CalibrationPlan::default(),
            inference: InferenceSettings::default(),
            default_beta: None,
            hidden_theta: None,
        }
    }
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ApiError> {
        let bad = |m: &str| Err(ApiError::bad_request(m.to_string()));
        if let Some(id) = &self.id {
            if !valid_id(id) {
                return bad("id must be 1-64 characters of [A-Za-z0-9_-]");
            }
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        let c = &self.calibration;
        let calibrates = self.calibrates();
        if (c.rewards == 0) != (c.block == 0) {
            return bad("calibration.rewards and calibration.block must both be zero or both positive");
        }
        if !(c.design_beta.is_finite() && c.design_beta >= 0.0) {
            return bad("calibration.design_beta must be finite and non-negative");
        }
        let i = &self.inference;
        if i.kinds.is_empty() {
            return bad("inference.kinds must not be empty");
        }
        if !(i.pool_beta.is_finite() && i.pool_beta >= 0.0) {
            return bad("inference.pool_beta must be finite and non-negative");
        }
        if let Some(b) = self.default_beta {
            if !(b.is_finite() && b >= 0.0) {
                return bad("default_beta must be finite and non-negative");
            }
        }
        if !calibrates && self.default_beta.is_none() {
            return bad("an empty calibration plan requires default_beta");
        }
        for k in &i.kinds {
            let covered = calibrates && c.kinds.contains(k);
            if !covered && self.default_beta.is_none() {
                return Err(ApiError::bad_request(format!(
                    "inference kind {k} is not calibrated and no default_beta is set"
                )));
            }
        }
        if let Some(t) = &self.hidden_theta {
            if t.iter().any(|x| !x.is_finite()) {
                return bad("hidden_theta must be finite");
            }
        }
        self.world.build()?;
        Ok(())
    }

    pub fn calibrates(&self) -> bool {
        let c = &self.calibration;
        c.rewards > 0 && c.block > 0 && !c.kinds.is_empty()
    }
}
