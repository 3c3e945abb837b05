//! Policies over beliefs, rollouts, and the learners that distill planner
//! labels into policies that run without the planner.

mod checkpoint;
mod eval;
mod learners;
mod rollout;
mod supervised;

pub use checkpoint::{read_policy, write_policy, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use eval::{evaluate, AccuracyRow, AccuracyTable, EvalConfig, CSV_HEADER};
pub use learners::{
    actor_critic_update, nfq_update, segment_from_rollout, train_actor_critic, train_nfq, RlConfig, Segment, GRAD_CLIP,
};
pub use rollout::{
    importance_weight, rollout, target_probs, Environment, EpisodeSource, ModelEpisode, Rollout, Selection, Step,
    ViewEpisode,
};
pub use supervised::{
    fit_sequences, label_sequences, tied_argmax_targets, train_supervised, SequenceSet, SupervisedConfig,
    SupervisedReport,
};

use crate::belief::Belief;
use crate::nn::{softmax, LstmNet, LstmState, Mlp};
use crate::planner::ActionValueLabels;
use serde::{Deserialize, Serialize};

/// Default cap on importance weights.
pub const DEFAULT_MAX_WEIGHT: f64 = 10.0;

/// A (possibly stateful) map from the current belief to action probabilities.
pub trait Policy {
    fn num_actions(&self) -> usize;

    /// Called at the start of every episode.
    fn reset(&mut self) {}

    /// Distribution over actions at `belief`. Recurrent policies advance
    /// their state, so call this once per timestep.
    fn action_probs(&mut self, belief: &Belief) -> Vec<f64>;
}

/// How beliefs are presented to the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    /// Probabilities in label order.
    Raw,
    /// Probabilities sorted in decreasing order; invariant to relabeling.
    Sorted,
    /// Raw followed by sorted.
    #[default]
    Both,
}

impl FeatureMap {
    pub fn dim(self, num_labels: usize) -> usize {
        match self {
            FeatureMap::Raw | FeatureMap::Sorted => num_labels,
            FeatureMap::Both => 2 * num_labels,
        }
    }

    pub fn apply(self, belief: &Belief) -> Vec<f64> {
        let sorted = || {
            let mut s = belief.probs().to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        };
        match self {
            FeatureMap::Raw => belief.probs().to_vec(),
            FeatureMap::Sorted => sorted(),
            FeatureMap::Both => {
                let mut v = belief.probs().to_vec();
                v.extend(sorted());
                v
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMap::Raw => "raw",
            FeatureMap::Sorted => "sorted",
            FeatureMap::Both => "both",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "raw" => Some(FeatureMap::Raw),
            "sorted" => Some(FeatureMap::Sorted),
            "both" => Some(FeatureMap::Both),
            _ => None,
        }
    }
}

/// Uniform over actions.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub num_actions: usize,
}

impl Policy for UniformPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_probs(&mut self, _belief: &Belief) -> Vec<f64> {
        vec![1.0 / self.num_actions as f64; self.num_actions]
    }
}

/// Softmax of `values / temperature`.
pub fn softmax_with_temperature(values: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|v| v / temperature).collect();
    softmax(&scaled)
}

/// Softmax over the planner's action-values at the nearest labeled belief.
pub struct LabelPolicy<'a> {
    labels: &'a ActionValueLabels,
    temperature: f64,
}

impl<'a> LabelPolicy<'a> {
    pub fn new(labels: &'a ActionValueLabels, temperature: f64) -> crate::Result<Self> {
        if !(temperature > 0.0) {
            return Err(crate::Error::InvalidParams(format!(
                "temperature {temperature} must be positive"
            )));
        }
        if labels.is_empty() {
            return Err(crate::Error::InvalidParams(
                "behavior policy needs at least one label".into(),
            ));
        }
        Ok(Self { labels, temperature })
    }
}

impl Policy for LabelPolicy<'_> {
    fn num_actions(&self) -> usize {
        self.labels.num_actions()
    }

    fn action_probs(&mut self, belief: &Belief) -> Vec<f64> {
        softmax_with_temperature(&self.labels.nearest(belief).action_values, self.temperature)
    }
}

/// Softmax over the outputs of an action-value network.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub net: Mlp,
    pub features: FeatureMap,
    pub temperature: f64,
}

impl Policy for QPolicy {
    fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    fn action_probs(&mut self, belief: &Belief) -> Vec<f64> {
        softmax_with_temperature(&self.net.predict(&self.features.apply(belief)), self.temperature)
    }
}

/// Softmax over the logits of a policy network.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub net: Mlp,
    pub features: FeatureMap,
}

impl Policy for ActorPolicy {
    fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    fn action_probs(&mut self, belief: &Belief) -> Vec<f64> {
        softmax(&self.net.predict(&self.features.apply(belief)))
    }
}

/// Recurrent classifier fed one belief per timestep.
#[derive(Debug, Clone)]
pub struct RecurrentPolicy {
    pub net: LstmNet,
    pub features: FeatureMap,
    state: Option<LstmState>,
}

impl RecurrentPolicy {
    pub fn new(net: LstmNet, features: FeatureMap) -> Self {
        Self {
            net,
            features,
            state: None,
        }
    }
}

impl Policy for RecurrentPolicy {
    fn num_actions(&self) -> usize {
        self.net.shape().outputs
    }

    fn reset(&mut self) {
        self.state = Some(self.net.initial_state(1));
    }

    fn action_probs(&mut self, belief: &Belief) -> Vec<f64> {
        let net = &self.net;
        let state = self.state.get_or_insert_with(|| net.initial_state(1));
        net.step(state, &self.features.apply(belief))
    }
}

/// Any policy a run can produce, in a form that can be saved and reloaded.
#[derive(Debug, Clone)]
pub enum TrainedPolicy {
    Random(UniformPolicy),
    Q(QPolicy),
    Actor(ActorPolicy),
    Recurrent(RecurrentPolicy),
}

impl TrainedPolicy {
    pub fn as_policy(&mut self) -> &mut dyn Policy {
        match self {
            TrainedPolicy::Random(p) => p,
            TrainedPolicy::Q(p) => p,
            TrainedPolicy::Actor(p) => p,
            TrainedPolicy::Recurrent(p) => p,
        }
    }
}
