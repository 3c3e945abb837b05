//! Episodes under a policy, and importance weights between two policies.

use super::Policy;
use crate::belief::{argmax, belief_update, Belief, LikelihoodModel, RewardSpec};
use crate::error::{Error, Result};
use crate::sensing::Sensing;
use crate::world::{simulate_action, EpisodeState, ViewWorld};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

/// Source of observations for one episode.
pub trait Environment {
    fn num_actions(&self) -> usize;

    /// Applies `action` and returns the sensing configuration it reached and
    /// the observation seen there.
    fn step(&mut self, action: usize, rng: &mut dyn rand::RngCore) -> (usize, usize);
}

/// An object in a view world, inspected by rotation.
pub struct ViewEpisode<'a> {
    world: &'a ViewWorld,
    state: EpisodeState,
}

impl<'a> ViewEpisode<'a> {
    /// Episode whose first image is `start_obs`.
    pub fn new(world: &'a ViewWorld, start_obs: usize) -> Self {
        let state = EpisodeState {
            true_label: world.label_of(start_obs),
            view: world.view_of(start_obs),
            step: 0,
        };
        Self { world, state }
    }

    pub fn state(&self) -> EpisodeState {
        self.state
    }
}

impl Environment for ViewEpisode<'_> {
    fn num_actions(&self) -> usize {
        self.world.num_actions()
    }

    fn step(&mut self, action: usize, rng: &mut dyn rand::RngCore) -> (usize, usize) {
        let (next, obs) = simulate_action(self.state, action, self.world, rng);
        self.state = next;
        (next.view, obs)
    }
}

/// Observations drawn from the likelihood model itself, with each action as
/// its own configuration.
pub struct ModelEpisode<'a> {
    model: &'a LikelihoodModel,
    true_label: usize,
}

impl<'a> ModelEpisode<'a> {
    pub fn new(model: &'a LikelihoodModel, true_label: usize) -> Self {
        Self { model, true_label }
    }
}

impl Environment for ModelEpisode<'_> {
    fn num_actions(&self) -> usize {
        self.model.num_configs()
    }

    fn step(&mut self, action: usize, rng: &mut dyn rand::RngCore) -> (usize, usize) {
        let probs: Vec<f64> = (0..self.model.num_observations())
            .map(|o| self.model.prob(self.true_label, action, o))
            .collect();
        let obs = WeightedIndex::new(&probs).expect("rows are distributions").sample(rng);
        (action, obs)
    }
}

/// How an action is picked from the policy's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Sample,
    /// Most probable action, lowest index on ties.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub belief: Belief,
    pub action: usize,
    pub obs: usize,
    pub reward: f64,
    pub next_belief: Belief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub true_label: usize,
    pub initial_belief: Belief,
    pub steps: Vec<Step>,
    /// Probability with which each step's action was chosen.
    pub behavior_probs: Vec<f64>,
}

impl Rollout {
    /// `b_0, b_1, ..., b_T`.
    pub fn beliefs(&self) -> Vec<&Belief> {
        std::iter::once(&self.initial_belief)
            .chain(self.steps.iter().map(|s| &s.next_belief))
            .collect()
    }
}

/// Runs `policy` for `max_steps` actions from `initial_belief`, updating the
/// belief with `model` after every observation.
#[allow(clippy::too_many_arguments)]
pub fn rollout<R: Rng>(
    policy: &mut dyn Policy,
    env: &mut dyn Environment,
    initial_belief: Belief,
    true_label: usize,
    model: &LikelihoodModel,
    reward: &RewardSpec,
    max_steps: usize,
    selection: Selection,
    rng: &mut R,
) -> Result<Rollout> {
    policy.reset();
    let mut belief = initial_belief.clone();
    let mut steps = Vec::with_capacity(max_steps);
    let mut behavior_probs = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let probs = policy.action_probs(&belief);
        let (action, p) = match selection {
            Selection::Sample => {
                let a = WeightedIndex::new(&probs)
                    .map_err(|e| Error::InvalidParams(format!("policy output is not a distribution: {e}")))?
                    .sample(rng);
                (a, probs[a])
            }
            Selection::Greedy => (argmax(&probs), 1.0),
        };
        let (config, obs) = env.step(action, rng);
        let next = belief_update(&belief, config, obs, model)?;
        let correct = argmax(next.probs()) == true_label;
        let r = if correct { reward.correct_reward } else { 0.0 } + reward.step_cost;
        steps.push(Step {
            belief,
            action,
            obs,
            reward: r,
            next_belief: next.clone(),
        });
        behavior_probs.push(p);
        belief = next;
    }
    Ok(Rollout {
        true_label,
        initial_belief,
        steps,
        behavior_probs,
    })
}

/// Episodes on a view world starting from a fixed pool of images.
#[derive(Clone, Copy)]
pub struct EpisodeSource<'a> {
    pub world: &'a ViewWorld,
    pub model: &'a LikelihoodModel,
    pub starts: &'a [usize],
    pub reward: RewardSpec,
    pub max_steps: usize,
}

impl EpisodeSource<'_> {
    /// One episode from `start_obs`.
    pub fn run_from<R: Rng>(
        &self,
        start_obs: usize,
        policy: &mut dyn Policy,
        selection: Selection,
        rng: &mut R,
    ) -> Result<Rollout> {
        let b0 = self.world.initial_belief(start_obs, self.model)?;
        let mut env = ViewEpisode::new(self.world, start_obs);
        let label = self.world.label_of(start_obs);
        rollout(
            policy,
            &mut env,
            b0,
            label,
            self.model,
            &self.reward,
            self.max_steps,
            selection,
            rng,
        )
    }

    /// One episode from a uniformly drawn start.
    pub fn run<R: Rng>(&self, policy: &mut dyn Policy, selection: Selection, rng: &mut R) -> Result<Rollout> {
        if self.starts.is_empty() {
            return Err(Error::InvalidParams("no start images".into()));
        }
        let start = self.starts[rng.random_range(0..self.starts.len())];
        self.run_from(start, policy, selection, rng)
    }
}

/// Probabilities `target` assigns to the actions of `tau`, replayed along its beliefs.
pub fn target_probs(tau: &Rollout, target: &mut dyn Policy) -> Vec<f64> {
    target.reset();
    tau.steps
        .iter()
        .map(|s| target.action_probs(&s.belief)[s.action])
        .collect()
}

/// Likelihood ratio of `tau` under the target and behavior policies, clipped
/// to `[0, max_weight]`.
pub fn importance_weight(tau: &Rollout, target_probs: &[f64], max_weight: f64) -> Result<f64> {
    let mut weight = 1.0;
    for (step, (&pt, &pb)) in target_probs.iter().zip(&tau.behavior_probs).enumerate() {
        if !(pb > 0.0) {
            return Err(Error::ZeroBehaviorProb { step });
        }
        weight *= pt / pb;
    }
    Ok(weight.clamp(0.0, max_weight))
}
