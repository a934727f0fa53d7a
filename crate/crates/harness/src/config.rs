//! Experiment configurations.
//!
//! Every knob that influences the numbers is a serialized field with an
//! explicit default, so a manifest's config fully determines its outputs.
//! Configs load from JSON and accept `dotted.key=value` overrides.

use std::fmt;
use std::str::FromStr;

use rrl_core::bias::{Bias, HumanModel};
use rrl_core::math::ScalarSearch;
use rrl_core::mdp::GridWorld;
use rrl_core::reward::RewardGrid;
use rrl_core::{rng, BetaByKind, FeedbackKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Environment, reward grid, seeds and feedback budgets shared by the sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub env_seed: u64,
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub slip_prob: f64,
    /// Reward on entering the goal. Zero by default in simulation: a large
    /// bonus makes every reward's optimal policy a dash to the goal.
    pub completion_bonus: f64,
    pub grid_seed: u64,
    pub grid_size: usize,
    /// Number of true rewards drawn from the grid.
    pub n_rewards: usize,
    pub run_seeds: Vec<u64>,
    pub calibration_rewards: usize,
    pub calibration_queries: usize,
    pub inference_queries: usize,
    /// β of the soft policies whose rollouts serve as comparison and e-stop designs.
    pub design_beta: f64,
    pub beta_search: SearchSettings,
    /// Worker threads; 0 uses the available parallelism. Outputs do not depend on it.
    pub threads: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            env_seed: 0,
            width: 10,
            height: 10,
            horizon: 25,
            slip_prob: 0.1,
            completion_bonus: 0.0,
            grid_seed: 0,
            grid_size: 1000,
            n_rewards: 10,
            run_seeds: vec![0, 1],
            calibration_rewards: 4,
            calibration_queries: 5,
            inference_queries: 5,
            design_beta: 1.0,
            beta_search: SearchSettings::default(),
            threads: 0,
        }
    }
}

impl SimSettings {
    pub fn world(&self) -> Result<GridWorld> {
        let mut r = rng::stream(self.env_seed, &[0x776f726c64]);
        Ok(GridWorld::random(
            &mut r,
            self.width,
            self.height,
            self.horizon,
            self.slip_prob,
            self.completion_bonus,
        )?)
    }

    pub fn grid(&self) -> RewardGrid {
        RewardGrid::with_size(self.grid_seed, self.grid_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.n_rewards == 0 || self.run_seeds.is_empty() {
            return bad("need at least one reward and one run seed");
        }
        if self.calibration_rewards == 0 || self.calibration_queries == 0 || self.inference_queries == 0 {
            return bad("feedback counts must be positive");
        }
        if !(self.design_beta.is_finite() && self.design_beta >= 0.0) {
            return bad("design_beta must be finite and non-negative");
        }
        let s = &self.beta_search;
        if !(s.low > 0.0 && s.high > s.low && s.grid_points >= 3) {
            return bad("beta_search needs 0 < low < high and at least 3 grid points");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub low: f64,
    pub high: f64,
    pub grid_points: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let s = ScalarSearch::default();
        Self {
            low: s.low,
            high: s.high,
            grid_points: s.grid_points,
        }
    }
}

impl SearchSettings {
    pub fn search(&self) -> ScalarSearch {
        ScalarSearch {
            low: self.low,
            high: self.high,
            grid_points: self.grid_points,
            ..ScalarSearch::default()
        }
    }
}

/// How the inference step chooses its human model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// β̂ fitted on calibration feedback, no bias.
    Fitted,
    /// The configured default β, no bias.
    Default,
    /// The true generative model, bias included.
    Oracle,
    /// A fixed β, no bias.
    Fixed(f64),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fitted => f.write_str("fitted"),
            Method::Default => f.write_str("default"),
            Method::Oracle => f.write_str("oracle"),
            Method::Fixed(b) => write!(f, "fixed:{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fitted" => Ok(Method::Fitted),
            "default" => Ok(Method::Default),
            "oracle" => Ok(Method::Oracle),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|b| b.parse::<f64>().ok())
                .filter(|b| b.is_finite() && *b >= 0.0)
                .map(Method::Fixed)
                .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub const STANDARD_METHODS: [Method; 3] = [Method::Fitted, Method::Default, Method::Oracle];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoltzmannSweepConfig {
    pub sim: SimSettings,
    /// True β values, applied to every feedback kind.
    pub betas: Vec<f64>,
    pub kinds: Vec<FeedbackKind>,
    pub methods: Vec<Method>,
    pub default_beta: f64,
}

impl Default for BoltzmannSweepConfig {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            betas: vec![0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0],
            kinds: FeedbackKind::ALL.to_vec(),
            methods: STANDARD_METHODS.to_vec(),
            default_beta: 1.0,
        }
    }
}

impl BoltzmannSweepConfig {
    /// A denser β grid for longer runs.
    pub fn full() -> Self {
        Self {
            betas: vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 1000.0],
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSweepConfig {
    pub sim: SimSettings,
    /// β of the simulated human for every kind.
    pub beta: f64,
    pub biases: Vec<Bias>,
    pub kinds: Vec<FeedbackKind>,
    pub methods: Vec<Method>,
    pub default_beta: f64,
}

impl Default for BiasSweepConfig {
    fn default() -> Self {
        let mut biases = vec![Bias::None];
        biases.extend([0.1, 0.5, 0.9, 1.0].map(Bias::Myopia));
        biases.extend([0.1, 0.5, 0.9].map(Bias::Extremal));
        biases.extend([-40.0, -1.0, 0.0, 1.0, 40.0].map(Bias::Optimism));
        biases.push(Bias::Composite(vec![Bias::Myopia(0.5), Bias::Extremal(0.5)]));
        Self {
            sim: SimSettings::default(),
            beta: 1.0,
            biases,
            kinds: FeedbackKind::ALL.to_vec(),
            methods: STANDARD_METHODS.to_vec(),
            default_beta: 1.0,
        }
    }
}

impl BiasSweepConfig {
    pub fn full() -> Self {
        let mut biases = vec![Bias::None];
        biases.extend([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0].map(Bias::Myopia));
        biases.extend([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0].map(Bias::Extremal));
        biases.extend([-40.0, -10.0, -1.0, 0.0, 1.0, 10.0, 40.0].map(Bias::Optimism));
        biases.push(Bias::Composite(vec![Bias::Myopia(0.5), Bias::Extremal(0.5)]));
        Self {
            biases,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveAblationConfig {
    pub sim: SimSettings,
    /// Run seeds of the ablation; each draws its own true reward.
    pub seeds: Vec<u64>,
    pub true_beta: BetaByKind,
    /// β used by the "default" arms for every kind.
    pub default_beta: f64,
    pub rounds: usize,
    pub demo_eig_samples: usize,
    pub comparison_rollouts: usize,
    pub estop_rollouts: usize,
    pub max_demo_starts: usize,
    pub pool_beta: f64,
    pub support_size: usize,
    pub support_tolerance: f64,
    pub kinds: Vec<FeedbackKind>,
}

impl Default for ActiveAblationConfig {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            seeds: (0..20).collect(),
            true_beta: BetaByKind {
                demo: 0.1,
                comp: 10.0,
                estop: 1.0,
            },
            default_beta: 1.0,
            rounds: 5,
            demo_eig_samples: 4,
            comparison_rollouts: 8,
            estop_rollouts: 8,
            max_demo_starts: 4,
            pool_beta: 1.0,
            support_size: 200,
            support_tolerance: 1e-6,
            kinds: FeedbackKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub sim: SimSettings,
    /// Rewards (from the grid) over which β̂ is fitted per bias.
    pub n_rewards: usize,
    pub beta: f64,
    pub biases: Vec<Bias>,
    /// Candidates in the KL scatter for the first reward.
    pub kl_candidates: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let mut biases = vec![Bias::None];
        biases.extend([0.1, 0.5, 0.9].map(Bias::Myopia));
        biases.extend([0.1, 0.5, 0.9].map(Bias::Extremal));
        biases.extend([-40.0, 40.0].map(Bias::Optimism));
        Self {
            sim: SimSettings::default(),
            n_rewards: 20,
            beta: 1.0,
            biases,
            kl_candidates: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n: usize,
    pub k: usize,
    pub rewards: [f64; 3],
    pub beta_low: f64,
    pub beta_high: f64,
    pub points: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n: 2,
            k: 5,
            rewards: [3.0, 2.0, 1.0],
            beta_low: 1e-2,
            beta_high: 1e2,
            points: 41,
        }
    }
}

/// Any experiment, tagged by kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    BoltzmannSweep(BoltzmannSweepConfig),
    BiasSweep(BiasSweepConfig),
    ActiveAblation(ActiveAblationConfig),
    Diagnostics(DiagnosticsConfig),
    ToyCrossover(ToyConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BoltzmannSweep(_) => "boltzmann-sweep",
            Self::BiasSweep(_) => "bias-sweep",
            Self::ActiveAblation(_) => "active-ablation",
            Self::Diagnostics(_) => "diagnostics",
            Self::ToyCrossover(_) => "toy-crossover",
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configs always serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds a typed config from an optional JSON document plus overrides.
///
/// Overrides look like `sim.n_rewards=3` or `betas=[0.1,1]`; the value is
/// parsed as JSON and falls back to a plain string. Keys must already exist
/// in the fully defaulted config.
pub fn load_config<T>(document: Option<&str>, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let base: T = match document {
        Some(doc) => {
            let mut v: Value = serde_json::from_str(doc)?;
            // A tagged document may be passed to the matching subcommand.
            if let Value::Object(m) = &mut v {
                m.remove("experiment");
            }
            serde_json::from_value(v)?
        }
        None => T::default(),
    };
    let mut value = serde_json::to_value(&base)?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(m) => m
                    .get_mut(part)
                    .ok_or_else(|| HarnessError::Config(format!("unknown config key {key:?}")))?,
                Value::Array(a) => part
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| a.get_mut(i))
                    .ok_or_else(|| HarnessError::Config(format!("bad index in {key:?}")))?,
                _ => return Err(HarnessError::Config(format!("{key:?} descends into a scalar"))),
            };
        }
        *slot = parsed;
    }
    Ok(serde_json::from_value(value)?)
}

/// The true generative model of a sweep cell.
pub fn truth_model(beta: f64, bias: Bias) -> HumanModel {
    HumanModel {
        beta: BetaByKind::uniform(beta),
        bias,
    }
}
