//! Stage-by-stage driver for the recognition pipeline: generate a world,
//! plan, train policies, evaluate them and reweight the observation model.

// Negated comparisons are how the validators reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod stages;

use aor_core::oracle::{exact_value, random_instance};
use aor_core::seed::stream_rng;
use aor_core::{Belief, RewardSpec};
use std::fmt::Write as _;

/// Shape of a random tiny instance for exact evaluation.
#[derive(Debug, Clone, Copy)]
pub struct TinyShape {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub horizon: usize,
}

/// Exact optimal value and action-values at the uniform belief of a seeded
/// random instance.
pub fn oracle_report(seed: u64, shape: TinyShape, reward: RewardSpec) -> aor_core::Result<String> {
    let mut rng = stream_rng(seed, "oracle");
    let inst = random_instance(
        &mut rng,
        shape.states,
        shape.actions,
        shape.observations,
        reward,
        shape.horizon,
    )?;
    let values = exact_value(&Belief::uniform(shape.states), &inst)?;
    let mut s = String::new();
    let _ = writeln!(s, "value {:.12}", values.value);
    for (a, q) in values.action_values.iter().enumerate() {
        let _ = writeln!(s, "action {a} {q:.12}");
    }
    Ok(s)
}
