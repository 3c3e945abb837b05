//! Belief tree search with per-level δ-packing.
//!
//! Every node expands all actions and all observations with non-negligible
//! evidence. A successor belief within δ of an already expanded belief at the
//! same level (and with the same sensing context) reuses that node's value
//! instead of growing a new subtree.

mod labels;
mod packing;

pub use labels::{read_labels, write_labels, ActionValueLabels, LabelRecord, LABELS_MAGIC, LABELS_VERSION};
pub use packing::{DeltaPacking, Representative};

use crate::belief::{argmax, successors, Belief, LikelihoodModel, RewardSpec};
use crate::error::{Error, Result};
use crate::sensing::Sensing;
use crate::world::initial_belief;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Successors whose evidence does not exceed this are dropped by default.
pub const DEFAULT_MIN_EVIDENCE: f64 = 1e-12;

/// How the action-values of the roots inside δ(b₀) are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootAggregation {
    #[default]
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub delta: f64,
    pub height: usize,
    pub min_evidence: f64,
    pub root_aggregation: RootAggregation,
}

/// Packing radius and tree height that bound the value error by `epsilon`.
pub fn params_from_epsilon(epsilon: f64, gamma: f64, r_max: f64) -> Result<PlannerParams> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} must be positive")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParams(format!("gamma {gamma} outside (0, 1)")));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidParams(format!("r_max {r_max} must be positive")));
    }
    let delta = epsilon * (1.0 - gamma).powi(2) / (2.0 * r_max);
    let ratio = (1.0 - gamma) * epsilon / (2.0 * r_max);
    let height = (ratio.ln() / gamma.ln()).ceil().max(1.0) as usize;
    Ok(PlannerParams {
        epsilon,
        gamma,
        r_max,
        delta,
        height,
        min_evidence: DEFAULT_MIN_EVIDENCE,
        root_aggregation: RootAggregation::Mean,
    })
}

/// Value of a node and of each action at it.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValues {
    pub value: f64,
    pub action_values: Vec<f64>,
}

/// Planner over one likelihood model. Holds no per-tree state; each call to
/// [`Self::expand`] works on the packing it is given.
pub struct BeliefTreeSearch<'a, S: Sensing + ?Sized> {
    sensing: &'a S,
    model: &'a LikelihoodModel,
    reward: RewardSpec,
    params: PlannerParams,
}

impl<'a, S: Sensing + ?Sized> BeliefTreeSearch<'a, S> {
    pub fn new(sensing: &'a S, model: &'a LikelihoodModel, reward: RewardSpec, params: PlannerParams) -> Result<Self> {
        reward.validate()?;
        if !(params.delta > 0.0) || params.height == 0 {
            return Err(Error::InvalidParams("delta and height must be positive".into()));
        }
        if params.gamma != reward.gamma {
            return Err(Error::InvalidParams(format!(
                "planner gamma {} differs from reward gamma {}",
                params.gamma, reward.gamma
            )));
        }
        Ok(Self {
            sensing,
            model,
            reward,
            params,
        })
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    pub fn new_packing(&self) -> DeltaPacking {
        DeltaPacking::new(self.params.delta, self.model.num_states(), self.params.height)
    }

    /// Values of the node `(context, belief)` at `level`, building the
    /// subtree below it into `packing`.
    pub fn expand(&self, level: usize, context: usize, belief: &Belief, packing: &mut DeltaPacking) -> NodeValues {
        if level >= self.params.height {
            let value = self.reward.leaf_value(belief);
            return NodeValues {
                value,
                action_values: vec![value; self.sensing.num_actions()],
            };
        }
        let next = level + 1;
        let mut action_values = Vec::with_capacity(self.sensing.num_actions());
        for action in 0..self.sensing.num_actions() {
            let config = self.sensing.config(context, action);
            let next_context = self.sensing.next_context(context, action);
            let mut q = self.reward.step_cost;
            for succ in successors(belief, config, self.model, self.params.min_evidence) {
                let immediate = self.reward.correct_reward * succ.belief.max_prob();
                let future = match packing.find(next, next_context, &succ.belief) {
                    Some(id) => packing.get(next, id).value,
                    None => {
                        let id = packing.insert(next, next_context, succ.belief.clone());
                        let child = self.expand(next, next_context, &succ.belief, packing);
                        let value = child.value;
                        packing.set_value(next, id, child.value, child.action_values);
                        value
                    }
                };
                q += succ.evidence * (immediate + self.reward.gamma * future);
            }
            action_values.push(q);
        }
        let value = action_values[argmax(&action_values)];
        NodeValues { value, action_values }
    }

    /// Values of `belief` as a lone root with a fresh packing.
    pub fn root(&self, context: usize, belief: &Belief) -> NodeValues {
        let mut packing = self.new_packing();
        self.expand(0, context, belief, &mut packing)
    }

    /// Action-values for the image `root_obs`, combined over every candidate
    /// image whose initial belief lies within δ of its own. `candidates` are
    /// usually the training images; the root always counts as a member.
    pub fn root_values(&self, root_obs: usize, candidates: &[usize]) -> Result<(Belief, Vec<f64>)> {
        let mut cache = RootCache::default();
        self.root_values_cached(root_obs, candidates, &mut cache)
    }

    fn root_values_cached(
        &self,
        root_obs: usize,
        candidates: &[usize],
        cache: &mut RootCache,
    ) -> Result<(Belief, Vec<f64>)> {
        let root_belief = cache.belief(root_obs, self.sensing, self.model)?;
        let mut members = vec![root_obs];
        for &obs in candidates {
            if obs != root_obs && cache.belief(obs, self.sensing, self.model)?.l1(&root_belief) <= self.params.delta {
                members.push(obs);
            }
        }
        members.sort_unstable();
        let mut combined: Option<Vec<f64>> = None;
        for &obs in &members {
            let values = cache.values(obs, self, self.sensing)?;
            combined = Some(match combined {
                None => values.to_vec(),
                Some(acc) => match self.params.root_aggregation {
                    RootAggregation::Mean => acc.iter().zip(values).map(|(a, v)| a + v).collect(),
                    RootAggregation::Min => acc.iter().zip(values).map(|(a, v)| a.min(*v)).collect(),
                },
            });
        }
        let mut combined = combined.expect("root is always a member");
        if self.params.root_aggregation == RootAggregation::Mean {
            let n = members.len() as f64;
            combined.iter_mut().for_each(|q| *q /= n);
        }
        Ok((root_belief, combined))
    }

    /// One record per image of `train`, each root combining the training
    /// images within δ of it. Member trees are built once and reused.
    pub fn label_training_set(&self, train: &[usize]) -> Result<ActionValueLabels> {
        let mut cache = RootCache::default();
        let mut records = Vec::with_capacity(train.len());
        let mut sorted = train.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &obs in &sorted {
            let (belief, action_values) = self.root_values_cached(obs, &sorted, &mut cache)?;
            records.push(LabelRecord {
                obs,
                context: self.sensing.root_context(obs),
                belief,
                action_values,
            });
        }
        log::debug!("labeled {} roots, {} member trees", records.len(), cache.values.len());
        ActionValueLabels::new(self.sensing.num_actions(), records)
    }
}

#[derive(Default)]
struct RootCache {
    beliefs: BTreeMap<usize, Belief>,
    values: BTreeMap<usize, Vec<f64>>,
}

impl RootCache {
    fn belief<S: Sensing + ?Sized>(&mut self, obs: usize, sensing: &S, model: &LikelihoodModel) -> Result<Belief> {
        if let Some(b) = self.beliefs.get(&obs) {
            return Ok(b.clone());
        }
        let b = initial_belief(obs, sensing.root_config(obs), model)?;
        self.beliefs.insert(obs, b.clone());
        Ok(b)
    }

    fn values<S: Sensing + ?Sized>(
        &mut self,
        obs: usize,
        planner: &BeliefTreeSearch<'_, S>,
        sensing: &S,
    ) -> Result<&[f64]> {
        if !self.values.contains_key(&obs) {
            let belief = self.belief(obs, sensing, planner.model)?;
            let node = planner.root(sensing.root_context(obs), &belief);
            self.values.insert(obs, node.action_values);
        }
        Ok(&self.values[&obs])
    }
}
