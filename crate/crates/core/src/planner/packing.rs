//! Per-level δ-packing of expanded beliefs.
//!
//! Lookup hashes a belief by a few fixed random projections with entries in
//! [-1, 1]. Such a projection is 1-Lipschitz from L1 to the reals, so any
//! belief within δ of a representative lands in the same or an adjacent grid
//! cell of width δ. Representatives are registered in all 3^k cells around
//! their own, and a lookup scans a single cell.

use crate::belief::Belief;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

const MAX_PROJECTIONS: usize = 3;
const PROJECTION_SEED: u64 = 0x5eed_cafe;

type CellKey = (usize, [i64; MAX_PROJECTIONS]);

/// An expanded belief standing in for its δ-neighbourhood.
#[derive(Debug, Clone)]
pub struct Representative {
    pub context: usize,
    pub belief: Belief,
    pub value: f64,
    pub action_values: Vec<f64>,
}

#[derive(Debug, Default)]
struct Level {
    reps: Vec<Representative>,
    cells: HashMap<CellKey, Vec<u32>>,
}

#[derive(Debug)]
pub struct DeltaPacking {
    delta: f64,
    projections: Vec<Vec<f64>>,
    levels: Vec<Level>,
}

impl DeltaPacking {
    pub fn new(delta: f64, num_states: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        // The simplex has dimension |S| - 1.
        let k = num_states.saturating_sub(1).clamp(1, MAX_PROJECTIONS);
        let projections = (0..k)
            .map(|_| (0..num_states).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let levels = (0..=height).map(|_| Level::default()).collect();
        Self {
            delta,
            projections,
            levels,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn cell(&self, belief: &Belief) -> [i64; MAX_PROJECTIONS] {
        let mut key = [0i64; MAX_PROJECTIONS];
        for (k, w) in key.iter_mut().zip(&self.projections) {
            let proj: f64 = w.iter().zip(belief.probs()).map(|(w, b)| w * b).sum();
            *k = (proj / self.delta).floor() as i64;
        }
        key
    }

    /// Earliest representative at `level` with the same context within δ.
    pub fn find(&self, level: usize, context: usize, belief: &Belief) -> Option<usize> {
        let ids = self.levels[level].cells.get(&(context, self.cell(belief)))?;
        let reps = &self.levels[level].reps;
        ids.iter()
            .map(|&id| id as usize)
            .find(|&id| reps[id].belief.l1(belief) <= self.delta)
    }

    /// Adds a representative whose value is filled in later by [`Self::set_value`].
    pub fn insert(&mut self, level: usize, context: usize, belief: Belief) -> usize {
        let center = self.cell(&belief);
        let k = self.projections.len();
        let lvl = &mut self.levels[level];
        let id = lvl.reps.len();
        // Registered in every neighbouring cell so a lookup reads one cell;
        // ids within a cell stay in insertion order.
        for code in 0..3usize.pow(k as u32) {
            let mut key = center;
            let mut rest = code;
            for slot in key.iter_mut().take(k) {
                *slot += (rest % 3) as i64 - 1;
                rest /= 3;
            }
            lvl.cells.entry((context, key)).or_default().push(id as u32);
        }
        lvl.reps.push(Representative {
            context,
            belief,
            value: f64::NAN,
            action_values: Vec::new(),
        });
        id
    }

    pub fn set_value(&mut self, level: usize, id: usize, value: f64, action_values: Vec<f64>) {
        let rep = &mut self.levels[level].reps[id];
        rep.value = value;
        rep.action_values = action_values;
    }

    pub fn get(&self, level: usize, id: usize) -> &Representative {
        &self.levels[level].reps[id]
    }

    pub fn representatives(&self, level: usize) -> &[Representative] {
        &self.levels[level].reps
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Number of representatives per level.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.reps.len()).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.levels.iter().map(|l| l.reps.len()).sum()
    }
}
