//! Active object recognition on synthetic multi-view worlds: belief-MDP
//! mechanics, packed belief tree search, policy distillation and
//! observation-function reweighting.

// Negated comparisons are how the validators reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod error;
pub mod nn;
pub mod obsopt;
pub mod oracle;
pub mod planner;
pub mod policy;
pub mod seed;
pub mod sensing;
mod textio;
pub mod world;

pub use belief::{Belief, LikelihoodModel, RewardSpec};
pub use error::{Error, Result};
