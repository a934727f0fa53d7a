//! Simulated humans.
//!
//! A [`HumanModel`] is a Boltzmann-rational chooser with one β per feedback
//! kind whose planning may be distorted by a [`Bias`]. The same model serves
//! as a generative simulator (through a [`Responder`]) and as the likelihood
//! used for inference, so inference with the true model is the oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::feedback::{choice_log_likelihood, BetaByKind, FeedbackKind, FeedbackQuery, FeedbackResponse};
use crate::math::softmax;
use crate::mdp::{sample_index, sample_trajectory, soft_backward_induction, Backup, GridWorld, ReturnFeatures, SoftSolution};
use crate::{Error, Result};

/// Systematic distortion of the human's planning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", content = "param", rename_all = "lowercase")]
pub enum Bias {
    #[default]
    None,
    /// Plans (and judges returns) with discount `γ ∈ [0, 1]`.
    Myopia(f64),
    /// Overweights peak rewards; `α ∈ [0, 1]`, `α = 0` is fully greedy.
    Extremal(f64),
    /// Believes good outcomes are likelier (`τ > 0`) or less likely (`τ < 0`).
    Optimism(f64),
    /// Several distortions at once, each kind at most once.
    Composite(Vec<Bias>),
}

impl Bias {
    pub fn validate(&self) -> Result<()> {
        self.backup().map(|_| ())
    }

    /// The planning backup this bias induces.
    pub fn backup(&self) -> Result<Backup> {
        let mut b = Backup::STANDARD;
        let mut seen = [false; 3];
        self.fold_into(&mut b, &mut seen)?;
        b.validate()?;
        Ok(b)
    }

    fn fold_into(&self, b: &mut Backup, seen: &mut [bool; 3]) -> Result<()> {
        let mut mark = |i: usize| {
            if std::mem::replace(&mut seen[i], true) {
                Err(Error::InvalidParameter("a composite bias repeats a component".into()))
            } else {
                Ok(())
            }
        };
        match self {
            Bias::None => {}
            Bias::Myopia(g) => {
                mark(0)?;
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::InvalidParameter(format!("myopia gamma {g} outside [0, 1]")));
                }
                b.discount = *g;
            }
            Bias::Extremal(a) => {
                mark(1)?;
                b.extremal = Some(*a);
            }
            Bias::Optimism(t) => {
                mark(2)?;
                // tau = 0 is the true transition model
                b.optimism = if *t == 0.0 { None } else { Some(*t) };
                if !t.is_finite() {
                    return Err(Error::InvalidParameter(format!("optimism tau {t} is not finite")));
                }
            }
            Bias::Composite(parts) => {
                for p in parts {
                    p.fold_into(b, seen)?;
                }
            }
        }
        Ok(())
    }

    /// Discount applied to returns when judging whole trajectories. Only myopia
    /// affects comparisons and e-stops, since they involve no planning.
    pub fn return_discount(&self) -> f64 {
        match self {
            Bias::Myopia(g) => *g,
            Bias::Composite(parts) => parts.iter().map(Bias::return_discount).product(),
            _ => 1.0,
        }
    }

    pub fn is_none(&self) -> bool {
        match self {
            Bias::None => true,
            Bias::Composite(p) => p.iter().all(Bias::is_none),
            _ => false,
        }
    }
}

/// Biased soft backward induction: Q-values under the distorted backup and the
/// β-softmax policy over them.
pub fn biased_value_iteration(world: &GridWorld, theta: &[f64; 4], bias: &Bias, beta: f64) -> Result<SoftSolution> {
    soft_backward_induction(world.dynamics(), &world.transition_rewards(theta), beta, bias.backup()?)
}

/// A (possibly biased) Boltzmann-rational human.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanModel {
    pub beta: BetaByKind,
    #[serde(default)]
    pub bias: Bias,
}

/// A prepared response: everything needed to score it under many rewards.
enum Scored {
    Demo(Vec<(usize, usize, usize)>),
    Choice { feats: Vec<ReturnFeatures>, choice: usize },
}

impl HumanModel {
    pub fn boltzmann(beta: BetaByKind) -> Self {
        Self { beta, bias: Bias::None }
    }

    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        self.bias.validate()
    }

    /// The demonstrator's policy for reward `theta`.
    pub fn demo_policy(&self, world: &GridWorld, theta: &[f64; 4]) -> Result<SoftSolution> {
        biased_value_iteration(world, theta, &self.bias, self.beta.demo)
    }

    /// Perceived returns of every answer of a finite-choice design.
    pub fn choice_returns(&self, world: &GridWorld, query: &FeedbackQuery, theta: &[f64; 4]) -> Result<Vec<f64>> {
        let feats = query
            .choice_features(world, self.bias.return_discount())
            .ok_or_else(|| Error::InvalidParameter("demonstrations have no finite choice set".into()))?;
        let bonus = world.completion_bonus();
        Ok(feats.iter().map(|f| f.value(theta, bonus)).collect())
    }

    /// Exact answer distribution of a finite-choice design.
    pub fn choice_probabilities(&self, world: &GridWorld, query: &FeedbackQuery, theta: &[f64; 4]) -> Result<Vec<f64>> {
        let beta = self.beta.get(query.kind());
        let r: Vec<f64> = self.choice_returns(world, query, theta)?.iter().map(|x| beta * x).collect();
        Ok(softmax(&r))
    }

    pub fn log_likelihood(&self, world: &GridWorld, resp: &FeedbackResponse, theta: &[f64; 4]) -> Result<f64> {
        Ok(self.grid_log_likelihoods(world, &[*theta], std::slice::from_ref(resp))?[0])
    }

    /// `Σ_responses log P(response | θ)` for every θ in `thetas`. Each θ needs
    /// at most one planning pass however many demonstrations there are.
    pub fn grid_log_likelihoods(
        &self,
        world: &GridWorld,
        thetas: &[[f64; 4]],
        responses: &[FeedbackResponse],
    ) -> Result<Vec<f64>> {
        self.validate()?;
        let discount = self.bias.return_discount();
        let mut prepared = Vec::with_capacity(responses.len());
        for r in responses {
            prepared.push(match r {
                FeedbackResponse::Demonstration { choice, .. } => {
                    if choice.len() > world.horizon() {
                        return Err(Error::InvalidTrajectory("demonstration longer than the horizon".into()));
                    }
                    if let Some(c) = choice.cells().iter().find(|c| !world.contains(**c)) {
                        return Err(Error::InvalidTrajectory(format!("cell ({}, {}) is off the grid", c.x, c.y)));
                    }
                    Scored::Demo(choice.steps().map(|(t, s, a, _)| (t, world.index(s), a.index())).collect())
                }
                _ => Scored::Choice {
                    feats: r.query().choice_features(world, discount).expect("finite-choice design"),
                    choice: r.choice_index().expect("finite choice"),
                },
            });
        }
        let has_demo = prepared.iter().any(|p| matches!(p, Scored::Demo(_)));
        let bonus = world.completion_bonus();
        let mut returns = Vec::new();
        let mut out = Vec::with_capacity(thetas.len());
        for theta in thetas {
            let sol = if has_demo { Some(self.demo_policy(world, theta)?) } else { None };
            let mut total = 0.0;
            for (p, r) in prepared.iter().zip(responses) {
                total += match p {
                    Scored::Demo(steps) => {
                        let sol = sol.as_ref().expect("solved when demonstrations are present");
                        steps.iter().map(|&(t, s, a)| sol.log_prob(t, s, a)).sum::<f64>()
                    }
                    Scored::Choice { feats, choice } => {
                        returns.clear();
                        returns.extend(feats.iter().map(|f| f.value(theta, bonus)));
                        choice_log_likelihood(&returns, *choice, self.beta.get(r.kind()))?
                    }
                };
            }
            out.push(total);
        }
        Ok(out)
    }
}

/// Serialized responder configuration: a model plus the seed of its stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasedHumanModel {
    #[serde(flatten)]
    pub model: HumanModel,
    pub seed: u64,
}

impl BiasedHumanModel {
    pub fn responder(&self) -> Result<Responder> {
        Responder::new(self.model.clone(), self.seed)
    }
}

/// A seeded simulated human that answers queries.
pub struct Responder {
    model: HumanModel,
    rng: ChaCha8Rng,
    cache: Option<([f64; 4], SoftSolution)>,
}

impl Responder {
    pub fn new(model: HumanModel, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: None,
        })
    }

    pub fn model(&self) -> &HumanModel {
        &self.model
    }

    fn policy(&mut self, world: &GridWorld, theta: &[f64; 4]) -> Result<&SoftSolution> {
        if !matches!(&self.cache, Some((t, _)) if t == theta) {
            self.cache = Some((*theta, self.model.demo_policy(world, theta)?));
        }
        Ok(&self.cache.as_ref().expect("just filled").1)
    }

    pub fn respond(&mut self, world: &GridWorld, query: &FeedbackQuery, theta: &[f64; 4]) -> Result<FeedbackResponse> {
        match query {
            FeedbackQuery::Demonstration(start) => {
                query.validate(world)?;
                let start = *start;
                self.policy(world, theta)?;
                let (_, sol) = self.cache.as_ref().expect("policy cached");
                let traj = sample_trajectory(world, &sol.policy, start, &mut self.rng);
                Ok(FeedbackResponse::Demonstration {
                    design: start,
                    choice: traj,
                })
            }
            _ => {
                let probs = self.model.choice_probabilities(world, query, theta)?;
                let choice = sample_index(&probs, &mut self.rng);
                FeedbackResponse::from_choice(query, choice)
            }
        }
    }

    /// Answer frequencies over `n` independent draws of a finite-choice design.
    pub fn empirical_choice_distribution(
        &mut self,
        world: &GridWorld,
        query: &FeedbackQuery,
        theta: &[f64; 4],
        n: usize,
    ) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Empty("sample count"));
        }
        let probs = self.model.choice_probabilities(world, query, theta)?;
        let mut counts = vec![0usize; probs.len()];
        for _ in 0..n {
            counts[sample_index(&probs, &mut self.rng)] += 1;
        }
        Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
    }
}

/// Which feedback kinds a bias distorts beyond what β can absorb.
pub fn affects(bias: &Bias, kind: FeedbackKind) -> bool {
    match kind {
        FeedbackKind::Demonstration => !bias.is_none(),
        _ => bias.return_discount() != 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_json_shape() {
        let b = Bias::Composite(vec![Bias::Myopia(0.5), Bias::Extremal(0.5)]);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(
            s,
            r#"{"type":"composite","param":[{"type":"myopia","param":0.5},{"type":"extremal","param":0.5}]}"#
        );
        assert_eq!(serde_json::from_str::<Bias>(r#"{"type":"none"}"#).unwrap(), Bias::None);
        let m: BiasedHumanModel = serde_json::from_str(
            r#"{"beta":{"demo":1,"comp":2,"estop":3},"bias":{"type":"optimism","param":-4},"seed":9}"#,
        )
        .unwrap();
        assert_eq!(m.model.bias, Bias::Optimism(-4.0));
        assert_eq!(m.model.beta.estop, 3.0);
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(Bias::Myopia(1.5).validate().is_err());
        assert!(Bias::Extremal(-0.1).validate().is_err());
        assert!(Bias::Optimism(f64::INFINITY).validate().is_err());
        assert!(Bias::Composite(vec![Bias::Myopia(0.5), Bias::Myopia(0.3)]).validate().is_err());
        let b = Bias::Composite(vec![Bias::Myopia(0.5), Bias::Extremal(0.25)]).backup().unwrap();
        assert_eq!((b.discount, b.extremal, b.optimism), (0.5, Some(0.25), None));
    }

    #[test]
    fn only_myopia_touches_choice_returns() {
        assert_eq!(Bias::Extremal(0.2).return_discount(), 1.0);
        assert_eq!(Bias::Myopia(0.3).return_discount(), 0.3);
        assert!(!affects(&Bias::Optimism(3.0), FeedbackKind::Comparison));
        assert!(affects(&Bias::Optimism(3.0), FeedbackKind::Demonstration));
    }
}
