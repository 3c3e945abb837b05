//! Distilling planner labels into a recurrent action classifier.

use super::rollout::{EpisodeSource, Selection};
use super::{FeatureMap, LabelPolicy, RecurrentPolicy};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, sgd_step, GradFault, LstmNet, LstmShape};
use crate::planner::ActionValueLabels;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::learners::GRAD_CLIP;

/// Action-values within this of the best count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    pub hidden: usize,
    pub layers: usize,
    pub sequences_per_start: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub behavior_temperature: f64,
    pub features: FeatureMap,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 3,
            sequences_per_start: 8,
            epochs: 40,
            batch_size: 8,
            lr: 0.5,
            behavior_temperature: 1.0,
            features: FeatureMap::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedReport {
    /// Mean cross-entropy over the last epoch.
    pub final_loss: f64,
    /// Fraction of timesteps whose most probable action is a target action.
    pub train_accuracy: f64,
}

/// Uniform distribution over the actions tied for the highest value.
pub fn tied_argmax_targets(action_values: &[f64]) -> Vec<f64> {
    let best = action_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let hits: Vec<bool> = action_values.iter().map(|v| best - v <= tol).collect();
    let count = hits.iter().filter(|h| **h).count() as f64;
    hits.into_iter().map(|h| if h { 1.0 / count } else { 0.0 }).collect()
}

/// Sequences of featurized beliefs with per-timestep target distributions.
/// All sequences must have the same length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceSet {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<Vec<Vec<f64>>>,
}

impl SequenceSet {
    fn batch(&self, ids: &[usize]) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let steps = self.inputs[ids[0]].len();
        let dim = self.inputs[ids[0]][0].len();
        let outs = self.targets[ids[0]][0].len();
        let mut xs = Vec::with_capacity(steps);
        let mut ys = Vec::with_capacity(steps);
        for t in 0..steps {
            xs.push(Array2::from_shape_fn((ids.len(), dim), |(r, c)| {
                self.inputs[ids[r]][t][c]
            }));
            ys.push(Array2::from_shape_fn((ids.len(), outs), |(r, c)| {
                self.targets[ids[r]][t][c]
            }));
        }
        (xs, ys)
    }
}

/// Episodes under the planner's softmax policy from every start, labeled
/// with the tied best actions of the nearest labeled belief.
pub fn label_sequences<R: Rng>(
    source: &EpisodeSource<'_>,
    labels: &ActionValueLabels,
    cfg: &SupervisedConfig,
    rng: &mut R,
) -> Result<SequenceSet> {
    let mut behavior = LabelPolicy::new(labels, cfg.behavior_temperature)?;
    let mut set = SequenceSet::default();
    for &start in source.starts {
        for _ in 0..cfg.sequences_per_start {
            let tau = source.run_from(start, &mut behavior, Selection::Sample, rng)?;
            let beliefs = tau.beliefs();
            set.inputs.push(beliefs.iter().map(|b| cfg.features.apply(b)).collect());
            set.targets.push(
                beliefs
                    .iter()
                    .map(|b| tied_argmax_targets(&labels.nearest(b).action_values))
                    .collect(),
            );
        }
    }
    Ok(set)
}

/// Mini-batch gradient descent with backpropagation through time.
pub fn fit_sequences<R: Rng>(
    net: &mut LstmNet,
    data: &SequenceSet,
    cfg: &SupervisedConfig,
    rng: &mut R,
) -> SupervisedReport {
    let mut order: Vec<usize> = (0..data.inputs.len()).collect();
    let batch = cfg.batch_size.max(1);
    let mut final_loss = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut weighted = 0.0;
        for ids in order.chunks(batch) {
            let (xs, ys) = data.batch(ids);
            let (loss, mut grads) = net.loss_and_grad(&xs, &ys, GradFault::None);
            clip_grad_norm(&mut grads, GRAD_CLIP);
            sgd_step(net.params_mut(), &grads, cfg.lr);
            weighted += loss * ids.len() as f64;
        }
        final_loss = weighted / order.len().max(1) as f64;
    }
    SupervisedReport {
        final_loss,
        train_accuracy: accuracy(net, data),
    }
}

fn accuracy(net: &LstmNet, data: &SequenceSet) -> f64 {
    if data.inputs.is_empty() {
        return 0.0;
    }
    let ids: Vec<usize> = (0..data.inputs.len()).collect();
    let (xs, ys) = data.batch(&ids);
    let trace = net.forward(&xs);
    let mut hits = 0usize;
    let mut total = 0usize;
    for (p, y) in trace.probs.iter().zip(&ys) {
        for (prow, yrow) in p.rows().into_iter().zip(y.rows()) {
            let best = crate::belief::argmax(prow.as_slice().expect("standard layout"));
            hits += usize::from(yrow[best] > 0.0);
            total += 1;
        }
    }
    hits as f64 / total as f64
}

/// Trains a recurrent policy on sequences generated by the planner's
/// softmax policy from every start of `source`.
pub fn train_supervised<R: Rng>(
    source: &EpisodeSource<'_>,
    labels: &ActionValueLabels,
    cfg: &SupervisedConfig,
    rng: &mut R,
) -> Result<(RecurrentPolicy, SupervisedReport)> {
    if labels.is_empty() {
        return Err(Error::InvalidParams("supervised training needs labels".into()));
    }
    let data = label_sequences(source, labels, cfg, rng)?;
    let shape = LstmShape {
        input: cfg.features.dim(source.world.num_labels()),
        hidden: cfg.hidden,
        layers: cfg.layers,
        outputs: labels.num_actions(),
    };
    let mut net = LstmNet::new(shape, rng);
    let report = fit_sequences(&mut net, &data, cfg, rng);
    log::debug!(
        "supervised: loss {:.4}, train accuracy {:.3}",
        report.final_loss,
        report.train_accuracy
    );
    Ok((RecurrentPolicy::new(net, cfg.features), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(epochs: usize) -> SupervisedConfig {
        SupervisedConfig {
            hidden: 8,
            layers: 2,
            epochs,
            batch_size: 4,
            lr: 0.5,
            ..Default::default()
        }
    }

    fn toy(actions: usize, seqs: usize, seed: u64) -> SequenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = SequenceSet::default();
        for _ in 0..seqs {
            let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
            let ys = xs
                .iter()
                .map(|x| {
                    let mut y = vec![0.0; actions];
                    y[if x[0] > 0.5 { 0 } else { actions - 1 }] = 1.0;
                    y
                })
                .collect();
            set.inputs.push(xs);
            set.targets.push(ys);
        }
        set
    }

    fn shape(actions: usize) -> LstmShape {
        LstmShape {
            input: 3,
            hidden: 8,
            layers: 2,
            outputs: actions,
        }
    }

    #[test]
    fn ties_share_the_target() {
        assert_eq!(tied_argmax_targets(&[1.0, 2.0, 2.0]), vec![0.0, 0.5, 0.5]);
        assert_eq!(tied_argmax_targets(&[3.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(
            tied_argmax_targets(&[2.998_284_755_481_305, 2.9982847554813046]),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn one_sequence_is_memorized() {
        let data = toy(3, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = LstmNet::new(shape(3), &mut rng);
        let report = fit_sequences(&mut net, &data, &cfg(400), &mut rng);
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn uninformative_targets_give_maximum_entropy() {
        let mut data = toy(4, 8, 3);
        for seq in &mut data.targets {
            for y in seq.iter_mut() {
                *y = vec![0.25; 4];
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = LstmNet::new(shape(4), &mut rng);
        let report = fit_sequences(&mut net, &data, &cfg(200), &mut rng);
        assert!((report.final_loss - 4f64.ln()).abs() < 1e-3, "{}", report.final_loss);
    }

    #[test]
    fn relabeled_actions_permute_the_outputs() {
        let perm = [2usize, 0, 1];
        let data = toy(3, 6, 5);
        let mut permuted = data.clone();
        for seq in &mut permuted.targets {
            for y in seq.iter_mut() {
                let old = y.clone();
                for (a, &p) in perm.iter().enumerate() {
                    y[p] = old[a];
                }
            }
        }
        let net0 = LstmNet::new(shape(3), &mut ChaCha8Rng::seed_from_u64(6));
        let mut a = net0.clone();
        let mut b = net0.permute_outputs(&perm);
        fit_sequences(&mut a, &data, &cfg(20), &mut ChaCha8Rng::seed_from_u64(7));
        fit_sequences(&mut b, &permuted, &cfg(20), &mut ChaCha8Rng::seed_from_u64(7));
        let (xs, _) = data.batch(&[0, 1, 2]);
        let (pa, pb) = (a.forward(&xs).probs, b.forward(&xs).probs);
        for (ta, tb) in pa.iter().zip(&pb) {
            for r in 0..3 {
                for (k, &p) in perm.iter().enumerate() {
                    assert!((ta[[r, k]] - tb[[r, p]]).abs() < 1e-9);
                }
            }
        }
    }
}
