//! Multi-view object worlds with controlled confusion between labels.
//!
//! An observation is the image of one object at one view; ids flatten the
//! `(label, view)` grid as `label * views + view`. Every image carries a
//! classifier score row over labels. The likelihood model is built from those
//! rows by normalizing each class over the images taken at the same pose, so
//! `P(o | s, pose)` is a distribution over observations for every class and
//! pose.

mod dataset;
mod split;

pub use dataset::{
    load_dataset, read_dataset, save_dataset, write_dataset, ViewDataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use split::{novel_objects_split, novel_views_split, Split, SplitKind, SPLIT_MAGIC, SPLIT_VERSION};

use crate::belief::{belief_update, normalize_grouped, Belief, LikelihoodModel};
use crate::error::{Error, Result};
use crate::sensing::Sensing;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Objects inspected by rotation. Actions are signed view offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWorld {
    num_labels: usize,
    views: usize,
    offsets: Vec<i64>,
    jitter_prob: f64,
}

impl ViewWorld {
    pub fn new(num_labels: usize, views: usize, offsets: Vec<i64>, jitter_prob: f64) -> Result<Self> {
        if num_labels == 0 || views == 0 {
            return Err(Error::InvalidDesign("need at least one label and one view".into()));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidDesign("action set is empty".into()));
        }
        if !(0.0..1.0).contains(&jitter_prob) {
            return Err(Error::InvalidDesign(format!(
                "jitter_prob {jitter_prob} outside [0, 1)"
            )));
        }
        Ok(Self {
            num_labels,
            views,
            offsets,
            jitter_prob,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn jitter_prob(&self) -> f64 {
        self.jitter_prob
    }

    pub fn num_observations(&self) -> usize {
        self.num_labels * self.views
    }

    pub fn observation(&self, label: usize, view: usize) -> usize {
        label * self.views + view
    }

    pub fn label_of(&self, obs: usize) -> usize {
        obs / self.views
    }

    pub fn view_of(&self, obs: usize) -> usize {
        obs % self.views
    }

    /// View reached from `view` by `action`.
    pub fn rotate(&self, view: usize, action: usize) -> usize {
        (view as i64 + self.offsets[action]).rem_euclid(self.views as i64) as usize
    }

    /// Probability that the image at `image_view` is seen while at `pose`.
    pub fn jitter_weight(&self, pose: usize, image_view: usize) -> f64 {
        let v = self.views;
        let mut weight = 0.0;
        if image_view == pose {
            weight += 1.0 - self.jitter_prob;
        }
        if v > 1 {
            if image_view == (pose + 1) % v {
                weight += self.jitter_prob / 2.0;
            }
            if image_view == (pose + v - 1) % v {
                weight += self.jitter_prob / 2.0;
            }
        } else {
            weight += self.jitter_prob;
        }
        weight
    }

    /// Posterior from a uniform prior after seeing `obs` at its own pose.
    pub fn initial_belief(&self, obs: usize, model: &LikelihoodModel) -> Result<Belief> {
        initial_belief(obs, self.root_config(obs), model)
    }
}

impl Sensing for ViewWorld {
    fn num_actions(&self) -> usize {
        self.offsets.len()
    }

    fn config(&self, context: usize, action: usize) -> usize {
        self.rotate(context, action)
    }

    fn next_context(&self, context: usize, action: usize) -> usize {
        self.rotate(context, action)
    }

    fn root_context(&self, obs: usize) -> usize {
        self.view_of(obs)
    }

    fn root_config(&self, obs: usize) -> usize {
        self.view_of(obs)
    }
}

/// Bayes posterior from a uniform prior: b(s) ∝ P(obs | s, config).
pub fn initial_belief(obs: usize, config: usize, model: &LikelihoodModel) -> Result<Belief> {
    belief_update(&Belief::uniform(model.num_states()), config, obs, model)
}

/// Half-open interval of views `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRange {
    pub start: usize,
    pub len: usize,
}

impl ViewRange {
    pub fn contains(&self, view: usize) -> bool {
        view >= self.start && view < self.start + self.len
    }
}

/// Which labels look alike, and from where.
///
/// Inside a group's ambiguous ranges the score rows of its members coincide
/// up to `noise_level` (L1); elsewhere each member's row puts
/// `concentration` of its in-group mass on itself. `floor` mixes a uniform
/// row over all labels into every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionDesign {
    pub num_labels: usize,
    pub views: usize,
    pub offsets: Vec<i64>,
    pub groups: Vec<Vec<usize>>,
    pub ambiguous_views: Vec<Vec<ViewRange>>,
    pub noise_level: f64,
    pub concentration: f64,
    pub floor: f64,
    pub jitter_prob: f64,
}

/// Minimum self-mass of a discriminative row.
pub const MIN_SELF_MASS: f64 = 0.9;

impl ConfusionDesign {
    /// Consecutive groups of `group_size` labels whose ambiguous views are
    /// alternating blocks of `block` views, shifted by one view per group.
    /// A rotation by `block` therefore always leaves an ambiguous block.
    pub fn alternating_blocks(
        num_groups: usize,
        group_size: usize,
        views: usize,
        block: usize,
        offsets: Vec<i64>,
    ) -> Result<Self> {
        let blocks: Vec<(usize, usize)> = (0..num_groups)
            .map(|g| (block, if block == 0 { 0 } else { g % block }))
            .collect();
        Self::periodic_blocks(&blocks, group_size, views, offsets)
    }

    /// Consecutive groups of `group_size` labels; group `g` is ambiguous on
    /// alternating runs of `blocks[g].0` views, starting `blocks[g].1` views
    /// in. Groups with different run lengths are escaped by different
    /// rotations, so a good action depends on which group is in doubt.
    pub fn periodic_blocks(
        blocks: &[(usize, usize)],
        group_size: usize,
        views: usize,
        offsets: Vec<i64>,
    ) -> Result<Self> {
        for &(block, _) in blocks {
            if block == 0 || !views.is_multiple_of(2 * block) {
                return Err(Error::InvalidDesign(format!(
                    "views {views} must be a positive multiple of twice the block {block}"
                )));
            }
        }
        let groups: Vec<Vec<usize>> = (0..blocks.len())
            .map(|g| (g * group_size..(g + 1) * group_size).collect())
            .collect();
        let ambiguous_views = blocks
            .iter()
            .map(|&(block, shift)| {
                let mut ranges = Vec::new();
                let mut start = None;
                for v in 0..views {
                    let ambiguous = ((v + views - shift % views) / block).is_multiple_of(2);
                    match (ambiguous, start) {
                        (true, None) => start = Some(v),
                        (false, Some(s)) => {
                            ranges.push(ViewRange { start: s, len: v - s });
                            start = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = start {
                    ranges.push(ViewRange {
                        start: s,
                        len: views - s,
                    });
                }
                ranges
            })
            .collect();
        Ok(Self {
            num_labels: blocks.len() * group_size,
            views,
            offsets,
            groups,
            ambiguous_views,
            noise_level: 0.0,
            concentration: 0.95,
            floor: 0.0,
            jitter_prob: 0.0,
        })
    }

    /// Group index of every label.
    pub fn group_of_labels(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.num_labels];
        for (g, members) in self.groups.iter().enumerate() {
            for &l in members {
                if l < self.num_labels {
                    owner[l] = g;
                }
            }
        }
        owner
    }

    pub fn is_ambiguous(&self, group: usize, view: usize) -> bool {
        self.ambiguous_views[group].iter().any(|r| r.contains(view))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDesign(msg));
        if self.num_labels == 0 || self.views == 0 {
            return bad("need at least one label and one view".into());
        }
        let mut seen = vec![false; self.num_labels];
        for members in &self.groups {
            if members.is_empty() {
                return bad("empty confusion group".into());
            }
            for &l in members {
                if l >= self.num_labels || seen[l] {
                    return bad(format!("label {l} is out of range or in two groups"));
                }
                seen[l] = true;
            }
        }
        if let Some(l) = seen.iter().position(|s| !s) {
            return bad(format!("label {l} belongs to no group"));
        }
        if self.ambiguous_views.len() != self.groups.len() {
            return bad(format!(
                "{} ambiguous range lists for {} groups",
                self.ambiguous_views.len(),
                self.groups.len()
            ));
        }
        for (g, ranges) in self.ambiguous_views.iter().enumerate() {
            if ranges.iter().any(|r| r.start + r.len > self.views) {
                return bad(format!("ambiguous range of group {g} exceeds {} views", self.views));
            }
            if (0..self.views).all(|v| self.is_ambiguous(g, v)) {
                return bad(format!("group {g} has no discriminative view"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return bad(format!("noise_level {} outside [0, 1)", self.noise_level));
        }
        if !(0.0..1.0).contains(&self.floor) || !(0.0..=1.0).contains(&self.concentration) {
            return bad("floor must be in [0, 1) and concentration in [0, 1]".into());
        }
        for members in &self.groups {
            let own = if members.len() == 1 { 1.0 } else { self.concentration };
            let self_mass = own * (1.0 - self.floor) + self.floor / self.num_labels as f64;
            if self_mass < MIN_SELF_MASS {
                return bad(format!("discriminative self-mass {self_mass} below {MIN_SELF_MASS}"));
            }
        }
        ViewWorld::new(self.num_labels, self.views, self.offsets.clone(), self.jitter_prob)?;
        Ok(())
    }
}

/// Score rows of every image under `design`, indexed by observation id.
pub fn design_scores(design: &ConfusionDesign, seed: u64) -> Result<Vec<Vec<f64>>> {
    design.validate()?;
    let mut rng = crate::seed::stream_rng(seed, "design");
    let owner = design.group_of_labels();
    let s_count = design.num_labels;
    let mut rows = Vec::with_capacity(s_count * design.views);
    for label in 0..s_count {
        let members = &design.groups[owner[label]];
        for view in 0..design.views {
            let mut disc = vec![0.0; s_count];
            if members.len() == 1 {
                disc[label] = 1.0;
            } else {
                let shares: Vec<f64> = members.iter().map(|_| Exp1.sample(&mut rng)).collect::<Vec<f64>>();
                let others: f64 = members
                    .iter()
                    .zip(&shares)
                    .filter(|(m, _)| **m != label)
                    .map(|(_, x)| x)
                    .sum();
                for (&m, x) in members.iter().zip(&shares) {
                    disc[m] = if m == label {
                        design.concentration
                    } else {
                        (1.0 - design.concentration) * x / others
                    };
                }
            }
            let mut row = if design.is_ambiguous(owner[label], view) {
                // Nuisance shares carry no information about the label.
                let eta = design.noise_level / 2.0;
                let nuisance: Vec<f64> = members.iter().map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = nuisance.iter().sum();
                let mut row = vec![0.0; s_count];
                for (&m, x) in members.iter().zip(&nuisance) {
                    row[m] = (1.0 - eta) / members.len() as f64 + eta * x / total;
                }
                row
            } else {
                disc
            };
            for r in row.iter_mut() {
                *r = (1.0 - design.floor) * *r + design.floor / s_count as f64;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Likelihood model of a view world from per-image score rows
/// (`scores[obs][label]`).
pub fn view_model(world: &ViewWorld, scores: &[Vec<f64>]) -> Result<LikelihoodModel> {
    let (s_count, v_count) = (world.num_labels(), world.views());
    let num_obs = world.num_observations();
    if scores.len() != num_obs {
        return Err(Error::DimensionMismatch {
            expected: num_obs,
            found: scores.len(),
        });
    }
    let poses: Vec<usize> = (0..num_obs).map(|o| world.view_of(o)).collect();
    let (columns, normalizers) = normalize_grouped(scores, &poses, v_count)?;
    let mut table = vec![0.0; s_count * v_count * num_obs];
    for pose in 0..v_count {
        for (obs, column) in columns.iter().enumerate() {
            let weight = world.jitter_weight(pose, world.view_of(obs));
            if weight == 0.0 {
                continue;
            }
            let start = (pose * num_obs + obs) * s_count;
            for (t, c) in table[start..start + s_count].iter_mut().zip(column) {
                *t = weight * c;
            }
        }
    }
    LikelihoodModel::new(s_count, v_count, num_obs, table, normalizers)
}

/// Builds the world and its likelihood model from a design. Deterministic in
/// `seed`.
pub fn generate_world(design: &ConfusionDesign, seed: u64) -> Result<(ViewWorld, LikelihoodModel)> {
    let scores = design_scores(design, seed)?;
    let world = ViewWorld::new(
        design.num_labels,
        design.views,
        design.offsets.clone(),
        design.jitter_prob,
    )?;
    let model = view_model(&world, &scores)?;
    Ok((world, model))
}

/// Hidden and visible state of one inspection episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeState {
    pub true_label: usize,
    pub view: usize,
    pub step: usize,
}

/// Rotates by `action` and returns the image seen at the new pose, which is
/// replaced by a neighbouring view with probability `jitter_prob`.
pub fn simulate_action<R: Rng + ?Sized>(
    state: EpisodeState,
    action: usize,
    world: &ViewWorld,
    rng: &mut R,
) -> (EpisodeState, usize) {
    let view = world.rotate(state.view, action);
    let mut seen = view;
    if world.jitter_prob() > 0.0 && rng.random::<f64>() < world.jitter_prob() {
        let v = world.views();
        seen = if rng.random::<bool>() {
            (view + 1) % v
        } else {
            (view + v - 1) % v
        };
    }
    let next = EpisodeState {
        true_label: state.true_label,
        view,
        step: state.step + 1,
    };
    (next, world.observation(state.true_label, seen))
}
