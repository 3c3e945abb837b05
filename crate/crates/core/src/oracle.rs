//! Exact finite-horizon values by exhaustive enumeration, used to validate
//! the planner and the reweighting step.
//!
//! Two routes are provided. [`exact_value`] expands the full
//! action/observation tree of a small instance. [`LatticeInstance`] covers
//! much deeper horizons for a structured family of models: every likelihood
//! is a power of a fixed ratio and every class's row under an action is a
//! permutation of the same exponent multiset. Beliefs reached from a lattice
//! root are then determined by integer exponent sums, which makes memoization
//! exact.

use crate::belief::{successors, Belief, LikelihoodModel, RewardSpec, WorldSpec};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use std::collections::HashMap;

pub const MAX_STATES: usize = 4;
pub const MAX_ACTIONS: usize = 3;
pub const MAX_OBSERVATIONS: usize = 8;
pub const MAX_HORIZON: usize = 8;

/// A problem small enough for exhaustive expansion. Each action is its own
/// sensing configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    spec: WorldSpec,
    model: LikelihoodModel,
    reward: RewardSpec,
    horizon: usize,
}

impl TinyInstance {
    pub fn new(model: LikelihoodModel, reward: RewardSpec, horizon: usize) -> Result<Self> {
        let spec = WorldSpec {
            num_labels: model.num_states(),
            num_actions: model.num_configs(),
            num_observations: model.num_observations(),
        };
        if spec.num_labels > MAX_STATES
            || spec.num_actions > MAX_ACTIONS
            || spec.num_observations > MAX_OBSERVATIONS
            || horizon > MAX_HORIZON
        {
            return Err(Error::InstanceTooLarge(format!(
                "{} states, {} actions, {} observations, horizon {horizon}",
                spec.num_labels, spec.num_actions, spec.num_observations
            )));
        }
        reward.validate()?;
        Ok(Self {
            spec,
            model,
            reward,
            horizon,
        })
    }

    pub fn spec(&self) -> WorldSpec {
        self.spec
    }

    pub fn model(&self) -> &LikelihoodModel {
        &self.model
    }

    pub fn reward(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_model(&self, model: LikelihoodModel) -> Result<Self> {
        Self::new(model, self.reward, self.horizon)
    }
}

/// Random instance with every `(s, a)` row drawn uniformly from the simplex.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    states: usize,
    actions: usize,
    observations: usize,
    reward: RewardSpec,
    horizon: usize,
) -> Result<TinyInstance> {
    let mut table = vec![0.0; states * actions * observations];
    for a in 0..actions {
        for s in 0..states {
            let draws: Vec<f64> = (0..observations).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            for (o, d) in draws.iter().enumerate() {
                table[(a * observations + o) * states + s] = d / total;
            }
        }
    }
    let model = LikelihoodModel::new(states, actions, observations, table, vec![])?;
    TinyInstance::new(model, reward, horizon)
}

/// Optimal value and action-values of a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub value: f64,
    pub action_values: Vec<f64>,
}

/// Exact horizon-`inst.horizon` values of `b0`, expanding every action and
/// every observation with positive evidence.
pub fn exact_value(b0: &Belief, inst: &TinyInstance) -> Result<ExactValues> {
    if b0.len() != inst.spec.num_labels {
        return Err(Error::DimensionMismatch {
            expected: inst.spec.num_labels,
            found: b0.len(),
        });
    }
    Ok(backup(b0, inst, inst.horizon))
}

fn backup(b: &Belief, inst: &TinyInstance, remaining: usize) -> ExactValues {
    let actions = inst.spec.num_actions;
    if remaining == 0 {
        let value = inst.reward.leaf_value(b);
        return ExactValues {
            value,
            action_values: vec![value; actions],
        };
    }
    let r = &inst.reward;
    let action_values: Vec<f64> = (0..actions)
        .map(|a| {
            let mut q = r.step_cost;
            for succ in successors(b, a, &inst.model, 0.0) {
                let future = backup(&succ.belief, inst, remaining - 1).value;
                q += succ.evidence * (r.correct_reward * succ.belief.max_prob() + r.gamma * future);
            }
            q
        })
        .collect();
    let value = action_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ExactValues { value, action_values }
}

/// Expected discounted reward of a deterministic belief policy, averaged
/// over `roots`. The horizon and the terminal convention match
/// [`exact_value`], so the optimal policy attains the optimal value.
pub fn exact_total_reward(policy: &dyn Fn(&Belief) -> usize, inst: &TinyInstance, roots: &[Belief]) -> Result<f64> {
    if roots.is_empty() {
        return Err(Error::InvalidBelief("no root beliefs".into()));
    }
    let mut total = 0.0;
    for b in roots {
        if b.len() != inst.spec.num_labels {
            return Err(Error::DimensionMismatch {
                expected: inst.spec.num_labels,
                found: b.len(),
            });
        }
        total += policy_value(policy, b, inst, inst.horizon);
    }
    Ok(total / roots.len() as f64)
}

fn policy_value(policy: &dyn Fn(&Belief) -> usize, b: &Belief, inst: &TinyInstance, remaining: usize) -> f64 {
    let r = &inst.reward;
    if remaining == 0 {
        return r.leaf_value(b);
    }
    let action = policy(b);
    let mut q = r.step_cost;
    for succ in successors(b, action, &inst.model, 0.0) {
        let future = policy_value(policy, &succ.belief, inst, remaining - 1);
        q += succ.evidence * (r.correct_reward * succ.belief.max_prob() + r.gamma * future);
    }
    q
}

/// Relative exponent gaps above this are clamped. A state that far behind
/// carries less than `ratio^CLAMP` of the mass, below 1e-13 for the ratios
/// accepted by [`LatticeInstance::new`].
const CLAMP_FLOOR: f64 = 1e-13;

pub const MAX_LATTICE_STATES: usize = 8;

/// Instance with `P(o | s, a) = ratio^k[a][s][o] / Z_a`, where each row
/// `k[a][s][.]` permutes one exponent multiset per action.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeInstance {
    ratio: f64,
    exponents: Vec<Vec<Vec<u32>>>,
    normalizers: Vec<f64>,
    reward: RewardSpec,
    clamp: i64,
}

impl LatticeInstance {
    pub fn new(ratio: f64, exponents: Vec<Vec<Vec<u32>>>, reward: RewardSpec) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidModel(format!("ratio {ratio} outside (0, 1)")));
        }
        reward.validate()?;
        let states = exponents.first().map(Vec::len).unwrap_or(0);
        if states == 0 || states > MAX_LATTICE_STATES || exponents.iter().any(|rows| rows.len() != states) {
            return Err(Error::InvalidModel(format!(
                "every action needs one row per state, at most {MAX_LATTICE_STATES} states"
            )));
        }
        let mut normalizers = Vec::with_capacity(exponents.len());
        for (a, rows) in exponents.iter().enumerate() {
            let mut reference = rows[0].clone();
            reference.sort_unstable();
            for row in rows {
                let mut sorted = row.clone();
                sorted.sort_unstable();
                if sorted != reference {
                    return Err(Error::InvalidModel(format!(
                        "rows of action {a} are not permutations of one multiset"
                    )));
                }
            }
            normalizers.push(reference.iter().map(|&k| ratio.powi(k as i32)).sum());
        }
        let clamp = (CLAMP_FLOOR.ln() / ratio.ln()).ceil() as i64;
        if clamp >= 1 << KEY_BITS {
            return Err(Error::InvalidModel(format!("ratio {ratio} too close to 1")));
        }
        Ok(Self {
            ratio,
            exponents,
            normalizers,
            reward,
            clamp,
        })
    }

    /// Random lattice instance: each `(a, s)` row is a shuffle of `multiset`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        ratio: f64,
        states: usize,
        actions: usize,
        multiset: &[u32],
        reward: RewardSpec,
    ) -> Result<Self> {
        let exponents = (0..actions)
            .map(|_| {
                (0..states)
                    .map(|_| {
                        let mut row = multiset.to_vec();
                        row.shuffle(rng);
                        row
                    })
                    .collect()
            })
            .collect();
        Self::new(ratio, exponents, reward)
    }

    pub fn num_states(&self) -> usize {
        self.exponents[0].len()
    }

    pub fn num_actions(&self) -> usize {
        self.exponents.len()
    }

    pub fn num_observations(&self) -> usize {
        self.exponents[0][0].len()
    }

    pub fn reward(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn likelihood(&self, state: usize, action: usize, obs: usize) -> f64 {
        self.ratio.powi(self.exponents[action][state][obs] as i32) / self.normalizers[action]
    }

    /// The same model as a dense table, one configuration per action.
    pub fn model(&self) -> Result<LikelihoodModel> {
        let (s_n, a_n, o_n) = (self.num_states(), self.num_actions(), self.num_observations());
        let mut table = vec![0.0; s_n * a_n * o_n];
        for a in 0..a_n {
            for o in 0..o_n {
                for s in 0..s_n {
                    table[(a * o_n + o) * s_n + s] = self.likelihood(s, a, o);
                }
            }
        }
        LikelihoodModel::new(s_n, a_n, o_n, table, vec![])
    }

    /// Exponent vector of the posterior of a uniform prior after `obs` under `action`.
    pub fn observation_root(&self, action: usize, obs: usize) -> Vec<i64> {
        (0..self.num_states())
            .map(|s| i64::from(self.exponents[action][s][obs]))
            .collect()
    }

    /// Belief with `b(s) ∝ ratio^exponents[s]`.
    pub fn belief(&self, exponents: &[i64]) -> Belief {
        let low = exponents.iter().copied().min().unwrap_or(0);
        let weights = exponents.iter().map(|&k| self.ratio.powi((k - low) as i32)).collect();
        Belief::from_weights(weights).expect("lattice weights are positive")
    }

    /// Horizon-`horizon` optimal values of the lattice belief `root`, with
    /// the same backup and leaf as [`exact_value`].
    pub fn exact_value(&self, root: &[i64], horizon: usize) -> ExactValues {
        self.solver(horizon).solve(root)
    }

    /// Memoized solver for one horizon; reuse it across roots.
    pub fn solver(&self, horizon: usize) -> LatticeSolver<'_> {
        let max_exp = self.exponents.iter().flatten().flatten().copied().max().unwrap_or(0) as i64;
        let powers = (0..=self.clamp + max_exp).map(|k| self.ratio.powi(k as i32)).collect();
        LatticeSolver {
            lattice: self,
            horizon,
            powers,
            memo: vec![HashMap::new(); horizon + 1],
        }
    }
}

/// Exact solver over canonical exponent vectors: shifted so the smallest
/// entry is 0 and clamped at the cutoff, packed into one word.
pub struct LatticeSolver<'a> {
    lattice: &'a LatticeInstance,
    horizon: usize,
    powers: Vec<f64>,
    memo: Vec<HashMap<u64, f64>>,
}

const KEY_BITS: u32 = 8;

impl LatticeSolver<'_> {
    pub fn solve(&mut self, root: &[i64]) -> ExactValues {
        let key = self.pack(root);
        let actions = self.lattice.num_actions();
        let action_values: Vec<f64> = if self.horizon == 0 {
            vec![self.lattice.reward.leaf_value(&self.lattice.belief(root)); actions]
        } else {
            (0..actions).map(|a| self.q_value(key, a, 0)).collect()
        };
        let value = action_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ExactValues { value, action_values }
    }

    fn pack(&self, exponents: &[i64]) -> u64 {
        let low = exponents.iter().copied().min().unwrap_or(0);
        exponents.iter().enumerate().fold(0u64, |key, (s, &k)| {
            key | (((k - low).min(self.lattice.clamp) as u64) << (KEY_BITS * s as u32))
        })
    }

    fn unpack(&self, key: u64, out: &mut [i64]) {
        for (s, k) in out.iter_mut().enumerate() {
            *k = ((key >> (KEY_BITS * s as u32)) & ((1 << KEY_BITS) - 1)) as i64;
        }
    }

    fn q_value(&mut self, key: u64, action: usize, level: usize) -> f64 {
        let lattice = self.lattice;
        let states = lattice.num_states();
        let mut exps = [0i64; MAX_LATTICE_STATES];
        self.unpack(key, &mut exps[..states]);
        let mut prior = [0.0; MAX_LATTICE_STATES];
        let total: f64 = exps[..states].iter().map(|&k| self.powers[k as usize]).sum();
        for s in 0..states {
            prior[s] = self.powers[exps[s] as usize] / total;
        }
        let r = lattice.reward;
        let z = lattice.normalizers[action];
        let mut q = r.step_cost;
        let mut next = [0i64; MAX_LATTICE_STATES];
        for obs in 0..lattice.num_observations() {
            let mut evidence = 0.0;
            let mut best = 0.0f64;
            for s in 0..states {
                let k = i64::from(lattice.exponents[action][s][obs]);
                next[s] = exps[s] + k;
                let w = prior[s] * self.powers[k as usize] / z;
                evidence += w;
                best = best.max(w);
            }
            let next_key = self.pack(&next[..states]);
            let future = self.value(next_key, level + 1);
            q += evidence * (r.correct_reward * best / evidence + r.gamma * future);
        }
        q
    }

    fn value(&mut self, key: u64, level: usize) -> f64 {
        if let Some(v) = self.memo[level].get(&key) {
            return *v;
        }
        let v = if level == self.horizon {
            let mut exps = [0i64; MAX_LATTICE_STATES];
            let states = self.lattice.num_states();
            self.unpack(key, &mut exps[..states]);
            self.lattice.reward.leaf_value(&self.lattice.belief(&exps[..states]))
        } else {
            (0..self.lattice.num_actions())
                .map(|a| self.q_value(key, a, level))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        self.memo[level].insert(key, v);
        v
    }
}
