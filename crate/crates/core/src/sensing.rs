//! How actions select the sensing configuration of the next observation.
//!
//! Planning and rollouts carry a small integer context alongside the belief.
//! For abstract instances the context is unused and the configuration is the
//! action; in view worlds the context is the current pose and the
//! configuration is the pose reached by the rotation.

/// Action semantics of a label-identification problem.
pub trait Sensing {
    fn num_actions(&self) -> usize;

    /// Configuration under which the observation following `action` is drawn.
    fn config(&self, context: usize, action: usize) -> usize;

    /// Context after taking `action`.
    fn next_context(&self, context: usize, action: usize) -> usize;

    /// Context of an episode whose first observation is `obs`.
    fn root_context(&self, obs: usize) -> usize;

    /// Configuration under which the first observation `obs` was taken.
    fn root_config(&self, obs: usize) -> usize;
}

/// Each action is its own configuration; the first observation is taken
/// under action 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSensing {
    pub num_actions: usize,
}

impl Sensing for ActionSensing {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn config(&self, _context: usize, action: usize) -> usize {
        action
    }

    fn next_context(&self, _context: usize, _action: usize) -> usize {
        0
    }

    fn root_context(&self, _obs: usize) -> usize {
        0
    }

    fn root_config(&self, _obs: usize) -> usize {
        0
    }
}
