//! Reinforcement learners: n-step fitted Q and actor-critic, each with an
//! optional guide that draws episodes from the planner's softmax policy and
//! importance-weights the updates.

use super::rollout::{importance_weight, target_probs, EpisodeSource, Rollout, Selection};
use super::{ActorPolicy, FeatureMap, LabelPolicy, Policy, QPolicy, DEFAULT_MAX_WEIGHT};
use crate::belief::argmax;
use crate::error::Result;
use crate::nn::{clip_grad_norm, sgd_step, softmax_rows, Mlp};
use crate::planner::ActionValueLabels;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Gradient-norm cap shared by every learner.
pub const GRAD_CLIP: f64 = 5.0;

/// Consecutive transitions of one episode, already featurized.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Features of the belief after the last action.
    pub final_input: Vec<f64>,
    pub weight: f64,
}

/// Splits `tau` into segments of at most `n` steps.
pub fn segment_from_rollout(tau: &Rollout, features: FeatureMap, weight: f64, n: usize) -> Vec<Segment> {
    let n = n.max(1);
    tau.steps
        .chunks(n)
        .map(|chunk| Segment {
            inputs: chunk.iter().map(|s| features.apply(&s.belief)).collect(),
            actions: chunk.iter().map(|s| s.action).collect(),
            rewards: chunk.iter().map(|s| s.reward).collect(),
            final_input: features.apply(&chunk.last().expect("chunks are non-empty").next_belief),
            weight,
        })
        .collect()
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().collect();
    let n = flat.len() / dim.max(1);
    Array2::from_shape_vec((n, dim), flat).expect("rows share a dimension")
}

/// One gradient step on the weighted n-step TD loss
/// `Σ w·½(G_t − Q(s_t, a_t))² / N`, where `G_t` bootstraps from
/// `max_a Q(s_n, a)` of the network before the step and is held fixed.
/// Returns the loss before the step.
pub fn nfq_update(qnet: &mut Mlp, segments: &[Segment], gamma: f64, lr: f64) -> f64 {
    let total: usize = segments.iter().map(|s| s.actions.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let dim = qnet.input_dim();
    let inputs = stack(segments.iter().flat_map(|s| s.inputs.iter().cloned()), dim);
    let trace = qnet.forward(inputs.view());
    let q = trace.output();
    let mut grad_out = Array2::<f64>::zeros(q.raw_dim());
    let mut loss = 0.0;
    let mut row = 0;
    for seg in segments {
        let bootstrap = qnet.predict(&seg.final_input);
        let mut ret = bootstrap[argmax(&bootstrap)];
        let mut targets = vec![0.0; seg.actions.len()];
        for t in (0..seg.actions.len()).rev() {
            ret = seg.rewards[t] + gamma * ret;
            targets[t] = ret;
        }
        for (t, (&a, g)) in seg.actions.iter().zip(targets).enumerate() {
            let err = q[[row + t, a]] - g;
            loss += seg.weight * 0.5 * err * err;
            grad_out[[row + t, a]] = seg.weight * err / total as f64;
        }
        row += seg.actions.len();
    }
    let mut grads = qnet.backward(&trace, grad_out.view());
    clip_grad_norm(&mut grads, GRAD_CLIP);
    sgd_step(qnet.params_mut(), &grads, lr);
    loss / total as f64
}

/// One actor-critic step. The return of each step is the discounted reward
/// to the end of its segment, without bootstrapping. The actor ascends
/// `w·log π(a_t|s_t)·(R_t − V(s_t))` and the critic descends
/// `w·½(V(s_t) − R_t)²`, both averaged over steps. Returns the critic loss
/// before the step.
pub fn actor_critic_update(
    actor: &mut Mlp,
    critic: &mut Mlp,
    segments: &[Segment],
    gamma: f64,
    actor_lr: f64,
    critic_lr: f64,
) -> f64 {
    let total: usize = segments.iter().map(|s| s.actions.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let dim = actor.input_dim();
    let inputs = stack(segments.iter().flat_map(|s| s.inputs.iter().cloned()), dim);
    let actor_trace = actor.forward(inputs.view());
    let probs = softmax_rows(actor_trace.output());
    let critic_trace = critic.forward(inputs.view());
    let values = critic_trace.output();
    let mut actor_grad = Array2::<f64>::zeros(probs.raw_dim());
    let mut critic_grad = Array2::<f64>::zeros(values.raw_dim());
    let mut loss = 0.0;
    let mut row = 0;
    for seg in segments {
        let mut ret = 0.0;
        let mut returns = vec![0.0; seg.actions.len()];
        for t in (0..seg.actions.len()).rev() {
            ret = seg.rewards[t] + gamma * ret;
            returns[t] = ret;
        }
        for (t, (&a, r)) in seg.actions.iter().zip(returns).enumerate() {
            let i = row + t;
            let advantage = r - values[[i, 0]];
            loss += seg.weight * 0.5 * advantage * advantage;
            let scale = seg.weight * advantage / total as f64;
            for k in 0..probs.ncols() {
                let indicator = if k == a { 1.0 } else { 0.0 };
                actor_grad[[i, k]] = -scale * (indicator - probs[[i, k]]);
            }
            critic_grad[[i, 0]] = -scale;
        }
        row += seg.actions.len();
    }
    let mut ga = actor.backward(&actor_trace, actor_grad.view());
    clip_grad_norm(&mut ga, GRAD_CLIP);
    sgd_step(actor.params_mut(), &ga, actor_lr);
    let mut gc = critic.backward(&critic_trace, critic_grad.view());
    clip_grad_norm(&mut gc, GRAD_CLIP);
    sgd_step(critic.params_mut(), &gc, critic_lr);
    loss / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Critic step size for actor-critic; unused by fitted Q.
    pub critic_lr: f64,
    /// Softmax temperature of the fitted-Q policy.
    pub temperature: f64,
    /// Share of uniformly random actions in the episodes plain fitted Q
    /// collects for itself. Actor-critic stays on-policy.
    pub exploration: f64,
    /// Temperature of the planner-derived guide.
    pub behavior_temperature: f64,
    pub max_weight: f64,
    /// Divide guided weights by their batch mean, so a batch far from the
    /// current policy still moves it.
    pub self_normalize: bool,
    /// Longest segment used for one n-step update.
    pub segment_len: usize,
    pub features: FeatureMap,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            episodes_per_iteration: 16,
            hidden: vec![32],
            lr: 0.1,
            critic_lr: 0.1,
            temperature: 0.1,
            exploration: 0.2,
            behavior_temperature: 1.0,
            max_weight: DEFAULT_MAX_WEIGHT,
            self_normalize: true,
            segment_len: 10,
            features: FeatureMap::Both,
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

/// `policy` mixed with uniformly random actions.
struct Exploring<'a> {
    inner: &'a mut dyn Policy,
    epsilon: f64,
}

impl Policy for Exploring<'_> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn action_probs(&mut self, belief: &crate::belief::Belief) -> Vec<f64> {
        let uniform = self.epsilon / self.num_actions() as f64;
        self.inner
            .action_probs(belief)
            .into_iter()
            .map(|p| (1.0 - self.epsilon) * p + uniform)
            .collect()
    }
}

/// Episodes for one iteration, paired with their update weights. With a
/// guide the episodes follow it and are weighted against `target`;
/// otherwise they follow `target` with weight 1.
fn collect<R: Rng>(
    source: &EpisodeSource<'_>,
    guide: Option<&ActionValueLabels>,
    target: &mut dyn Policy,
    cfg: &RlConfig,
    rng: &mut R,
) -> Result<Vec<(Rollout, f64)>> {
    let mut out = Vec::with_capacity(cfg.episodes_per_iteration);
    for _ in 0..cfg.episodes_per_iteration {
        match guide {
            Some(labels) => {
                let mut behavior = LabelPolicy::new(labels, cfg.behavior_temperature)?;
                let tau = source.run(&mut behavior, Selection::Sample, rng)?;
                let w = importance_weight(&tau, &target_probs(&tau, target), cfg.max_weight)?;
                out.push((tau, w));
            }
            None => out.push((source.run(target, Selection::Sample, rng)?, 1.0)),
        }
    }
    if guide.is_some() && cfg.self_normalize {
        let mean = out.iter().map(|(_, w)| w).sum::<f64>() / out.len().max(1) as f64;
        if mean > 0.0 {
            out.iter_mut().for_each(|(_, w)| *w /= mean);
        }
    }
    Ok(out)
}

/// Fitted Q trained on episodes from `source`; guided when `guide` is given.
pub fn train_nfq<R: Rng>(
    source: &EpisodeSource<'_>,
    guide: Option<&ActionValueLabels>,
    cfg: &RlConfig,
    rng: &mut R,
) -> Result<QPolicy> {
    let labels = source.world.num_labels();
    let actions = crate::sensing::Sensing::num_actions(source.world);
    let net = Mlp::new(&sizes(cfg.features.dim(labels), &cfg.hidden, actions), rng);
    let mut policy = QPolicy {
        net,
        features: cfg.features,
        temperature: cfg.temperature,
    };
    for it in 0..cfg.iterations {
        let batch = match guide {
            Some(_) => collect(source, guide, &mut policy, cfg, rng)?,
            None => collect(
                source,
                None,
                &mut Exploring {
                    inner: &mut policy,
                    epsilon: cfg.exploration,
                },
                cfg,
                rng,
            )?,
        };
        let segments: Vec<Segment> = batch
            .iter()
            .flat_map(|(tau, w)| segment_from_rollout(tau, cfg.features, *w, cfg.segment_len))
            .collect();
        let loss = nfq_update(&mut policy.net, &segments, source.reward.gamma, cfg.lr);
        if it % 50 == 0 {
            log::debug!("nfq iteration {it}: td loss {loss:.4}");
        }
    }
    Ok(policy)
}

/// Actor-critic trained on episodes from `source`; guided when `guide` is given.
pub fn train_actor_critic<R: Rng>(
    source: &EpisodeSource<'_>,
    guide: Option<&ActionValueLabels>,
    cfg: &RlConfig,
    rng: &mut R,
) -> Result<ActorPolicy> {
    let labels = source.world.num_labels();
    let actions = crate::sensing::Sensing::num_actions(source.world);
    let dim = cfg.features.dim(labels);
    let net = Mlp::new(&sizes(dim, &cfg.hidden, actions), rng);
    let mut critic = Mlp::new(&sizes(dim, &cfg.hidden, 1), rng);
    let mut policy = ActorPolicy {
        net,
        features: cfg.features,
    };
    for it in 0..cfg.iterations {
        let batch = collect(source, guide, &mut policy, cfg, rng)?;
        let segments: Vec<Segment> = batch
            .iter()
            .flat_map(|(tau, w)| segment_from_rollout(tau, cfg.features, *w, cfg.segment_len))
            .collect();
        let loss = actor_critic_update(
            &mut policy.net,
            &mut critic,
            &segments,
            source.reward.gamma,
            cfg.lr,
            cfg.critic_lr,
        );
        if it % 50 == 0 {
            log::debug!("actor-critic iteration {it}: critic loss {loss:.4}");
        }
    }
    Ok(policy)
}
