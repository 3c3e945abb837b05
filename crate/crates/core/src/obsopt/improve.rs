//! The outer loop: retrain the classifier, replan, redistill, and reweight
//! from the new planner's behavior.

use super::classifier::{reweighted_retrain, ImageFeatures, LabeledImage, LikelihoodParams, RetrainConfig};
use super::weights::{compute_image_weights, ObservationWeights};
use crate::belief::{LikelihoodModel, RewardSpec};
use crate::error::{Error, Result};
use crate::planner::{ActionValueLabels, BeliefTreeSearch, PlannerParams};
use crate::policy::{evaluate, train_supervised, EpisodeSource, RecurrentPolicy, Selection, SupervisedConfig};
use crate::seed::{indexed_rng, stream_rng};
use crate::world::{view_model, ViewWorld};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImprovementConfig {
    pub iterations: usize,
    pub retrain: RetrainConfig,
    /// Episodes of the distilled policy per training image used to weight images.
    pub rollouts_per_start: usize,
    /// Stop once validation accuracy falls below the previous iteration's.
    pub early_stop: bool,
}

impl Default for ImprovementConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            retrain: RetrainConfig::default(),
            rollouts_per_start: 8,
            early_stop: true,
        }
    }
}

/// Fixed inputs shared by every iteration.
pub struct ImprovementSetup<'a> {
    pub world: &'a ViewWorld,
    pub features: &'a ImageFeatures,
    pub initial: &'a LikelihoodParams,
    pub train: &'a [usize],
    pub validation: &'a [usize],
    pub test: &'a [usize],
    pub planner: PlannerParams,
    pub reward: RewardSpec,
    pub max_steps: usize,
    pub supervised: &'a SupervisedConfig,
    pub eval_episodes: usize,
}

#[derive(Debug, Clone)]
pub struct Iteration {
    /// Counted from 1.
    pub index: usize,
    pub weights: ObservationWeights,
    pub params: LikelihoodParams,
    pub model: LikelihoodModel,
    pub labels: ActionValueLabels,
    pub policy: RecurrentPolicy,
    pub validation: Vec<f64>,
    pub test: Vec<f64>,
}

impl Iteration {
    pub fn validation_mean(&self) -> f64 {
        mean(&self.validation)
    }
}

#[derive(Debug, Clone)]
pub struct ImprovementRun {
    pub iterations: Vec<Iteration>,
    /// Last iteration before validation accuracy declined.
    pub best: usize,
    pub log: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Moves `arc` consecutive training views of every label into a validation
/// set. Returns `(train, validation)`, both ascending.
pub fn carve_validation<R: Rng + ?Sized>(
    world: &ViewWorld,
    train: &[usize],
    arc: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for label in 0..world.num_labels() {
        let mut views: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&o| world.label_of(o) == label)
            .map(|o| world.view_of(o))
            .collect();
        views.sort_unstable();
        if views.is_empty() {
            continue;
        }
        if arc >= views.len() {
            return Err(Error::InvalidDesign(format!(
                "label {label} has {} training views, too few to hold out {arc}",
                views.len()
            )));
        }
        let start = rng.random_range(0..views.len());
        for (i, &v) in views.iter().enumerate() {
            let obs = world.observation(label, v);
            if (i + views.len() - start) % views.len() < arc {
                held.push(obs);
            } else {
                keep.push(obs);
            }
        }
    }
    keep.sort_unstable();
    held.sort_unstable();
    Ok((keep, held))
}

fn examples(world: &ViewWorld, images: &[usize]) -> Vec<LabeledImage> {
    images
        .iter()
        .map(|&image| LabeledImage {
            image,
            label: world.label_of(image),
        })
        .collect()
}

/// Value of arriving at a labeled image: the correctness reward its own
/// belief earns plus the discounted planner value from there.
fn arrival_value(labels: &ActionValueLabels, reward: &RewardSpec, image: usize) -> Result<f64> {
    let record = labels.get(image).ok_or(Error::MissingValue { image })?;
    Ok(reward.correct_reward * record.belief.max_prob() + reward.step_cost + reward.gamma * record.value())
}

/// Weights from episodes of the previous iteration's distilled policy,
/// sampled from every training image.
fn policy_weights(
    setup: &ImprovementSetup<'_>,
    cfg: &ImprovementConfig,
    prev: &Iteration,
    seed: u64,
) -> Result<ObservationWeights> {
    let source = EpisodeSource {
        world: setup.world,
        model: &prev.model,
        starts: setup.train,
        reward: setup.reward,
        max_steps: setup.max_steps,
    };
    let mut policy = prev.policy.clone();
    let mut rng = indexed_rng(seed, "obsopt-rollouts", prev.index as u64);
    let mut rollouts = Vec::with_capacity(setup.train.len() * cfg.rollouts_per_start);
    for _ in 0..cfg.rollouts_per_start {
        for &start in setup.train {
            rollouts.push(source.run_from(start, &mut policy, Selection::Sample, &mut rng)?);
        }
    }
    compute_image_weights(
        &rollouts,
        setup.train,
        |s| s.obs,
        |image, _, _| arrival_value(&prev.labels, &setup.reward, image),
    )
}

fn run_iteration(
    setup: &ImprovementSetup<'_>,
    cfg: &ImprovementConfig,
    index: usize,
    weights: ObservationWeights,
    seed: u64,
) -> Result<Iteration> {
    let params = reweighted_retrain(
        setup.initial,
        setup.features,
        &examples(setup.world, setup.train),
        &weights,
        &cfg.retrain,
    )?;
    let model = view_model(setup.world, &params.scores(setup.features))?;
    let labels =
        BeliefTreeSearch::new(setup.world, &model, setup.reward, setup.planner)?.label_training_set(setup.train)?;
    let source = |starts| EpisodeSource {
        world: setup.world,
        model: &model,
        starts,
        reward: setup.reward,
        max_steps: setup.max_steps,
    };
    // The same streams every iteration, so accuracy differences come from the model.
    let (mut policy, _) = train_supervised(
        &source(setup.train),
        &labels,
        setup.supervised,
        &mut stream_rng(seed, "obsopt-lstm"),
    )?;
    let mut eval_rng = stream_rng(seed, "obsopt-eval");
    let validation = evaluate(
        &mut policy,
        &source(setup.validation),
        setup.eval_episodes,
        Selection::Greedy,
        &mut eval_rng,
    )?;
    let test = evaluate(
        &mut policy,
        &source(setup.test),
        setup.eval_episodes,
        Selection::Greedy,
        &mut eval_rng,
    )?;
    Ok(Iteration {
        index,
        weights,
        params,
        model,
        labels,
        policy,
        validation,
        test,
    })
}

/// First iteration: the classifier trained with equal weights.
pub fn first_iteration(setup: &ImprovementSetup<'_>, cfg: &ImprovementConfig, seed: u64) -> Result<Iteration> {
    run_iteration(setup, cfg, 1, ObservationWeights::uniform(setup.train)?, seed)
}

/// Reweights from `prev`'s distilled policy and retrains from `setup.initial`.
pub fn next_iteration(
    setup: &ImprovementSetup<'_>,
    cfg: &ImprovementConfig,
    prev: &Iteration,
    seed: u64,
) -> Result<Iteration> {
    let weights = policy_weights(setup, cfg, prev, seed)?;
    run_iteration(setup, cfg, prev.index + 1, weights, seed)
}

/// Runs up to `cfg.iterations` rounds. A degenerate class ends the loop and
/// keeps what was built.
pub fn iterate_improvement(setup: &ImprovementSetup<'_>, cfg: &ImprovementConfig, seed: u64) -> Result<ImprovementRun> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidParams(
            "at least one improvement iteration is needed".into(),
        ));
    }
    let mut iterations: Vec<Iteration> = vec![first_iteration(setup, cfg, seed)?];
    let mut log = vec![describe(&iterations[0])];
    let mut best = 1;
    for _ in 1..cfg.iterations {
        let prev = iterations.last().expect("non-empty");
        let it = match next_iteration(setup, cfg, prev, seed) {
            Ok(it) => it,
            Err(e @ Error::DegenerateClass { .. }) => {
                log.push(format!("iteration {}: aborted ({e})", prev.index + 1));
                break;
            }
            Err(e) => return Err(e),
        };
        log.push(describe(&it));
        let declined = it.validation_mean() < prev.validation_mean();
        let index = it.index;
        iterations.push(it);
        if declined {
            log.push(format!("validation accuracy stopped improving after iteration {best}"));
            if cfg.early_stop {
                break;
            }
        } else {
            best = index;
        }
    }
    if !log.iter().any(|l| l.starts_with("validation accuracy stopped")) {
        log.push(format!("validation accuracy did not decline; best iteration {best}"));
    }
    for line in &log {
        log::info!("{line}");
    }
    Ok(ImprovementRun { iterations, best, log })
}

pub fn describe(it: &Iteration) -> String {
    format!(
        "iteration {}: validation {:.4}, test step 0 {:.4}, test final {:.4}",
        it.index,
        it.validation_mean(),
        it.test[0],
        it.test.last().copied().unwrap_or(0.0)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validation_arcs_come_from_training_views() {
        let world = ViewWorld::new(2, 12, vec![1], 0.0).unwrap();
        let train: Vec<usize> = (0..24).filter(|o| !world.view_of(*o).is_multiple_of(4)).collect();
        let (keep, held) = carve_validation(&world, &train, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(held.len(), 4);
        assert_eq!(keep.len() + held.len(), train.len());
        assert!(held.iter().all(|o| train.contains(o) && !keep.contains(o)));
        for label in 0..2 {
            assert_eq!(held.iter().filter(|&&o| world.label_of(o) == label).count(), 2);
        }
        assert!(carve_validation(&world, &train, 9, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
