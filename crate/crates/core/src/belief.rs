//! Belief-MDP mechanics over a finite label set.
//!
//! The hidden state is the object label and never changes within an episode,
//! so the belief update reduces to a Bayes product:
//!
//!   b'(s) = P(o | s, c) · b(s) / Pr(o | c, b),   Pr(o | c, b) = Σ_s b(s) · P(o | s, c)
//!
//! `c` is the sensing configuration an action leads to. For abstract
//! instances the configuration is the action itself; for rotating-view worlds
//! it is the pose the object ends up in, so the model stays a plain
//! `(state, configuration, observation)` table.

use crate::error::{Error, Result};

/// Tolerance for the simplex constraint Σ b(s) = 1.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Evidence at or below this value is treated as an impossible observation.
pub const ZERO_EVIDENCE_TOL: f64 = 1e-30;

/// Point on the probability simplex over object labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

fn simplex_total(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidBelief("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidBelief(format!("entry {p} is negative or not finite")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidBelief(format!("entries sum to {total}")));
    }
    Ok(total)
}

impl Belief {
    /// Validates `probs` and renormalizes away floating-point drift.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total = simplex_total(&probs)?;
        Ok(Self(probs.into_iter().map(|p| p / total).collect()))
    }

    /// Like [`Belief::new`] but keeps the entries bit for bit, so a stored
    /// belief reads back exactly as it was written.
    pub fn restore(probs: Vec<f64>) -> Result<Self> {
        simplex_total(&probs)?;
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights into a belief.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > ZERO_EVIDENCE_TOL) || !total.is_finite() {
            return Err(Error::ZeroEvidence { evidence: total });
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(num_states: usize) -> Self {
        Self(vec![1.0 / num_states as f64; num_states])
    }

    /// All mass on `state`.
    pub fn point(num_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable label, ties resolved to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// L1 distance; panics on dimension mismatch. See [`belief_distance`].
    pub fn l1(&self, other: &Belief) -> f64 {
        assert_eq!(self.len(), other.len(), "belief dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Rewards for classifying by the argmax label after every step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub correct_reward: f64,
    pub step_cost: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            correct_reward: 1.0,
            step_cost: -0.05,
            gamma: 0.9,
        }
    }
}

impl RewardSpec {
    /// `gamma` may be 0 (myopic evaluation); the planner's own parameter
    /// derivation requires it strictly inside (0, 1).
    pub fn new(correct_reward: f64, step_cost: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            correct_reward,
            step_cost,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.step_cost <= 0.0) || !self.correct_reward.is_finite() {
            return Err(Error::InvalidParams(format!(
                "step_cost {} must be <= 0 and correct_reward finite",
                self.step_cost
            )));
        }
        Ok(())
    }

    /// Largest attainable |R(s, a)|.
    pub fn r_max(&self) -> f64 {
        (self.correct_reward + self.step_cost).abs().max(self.step_cost.abs())
    }

    /// Reward of committing to the current argmax with no continuation; the
    /// value of a node at the tree horizon.
    pub fn leaf_value(&self, belief: &Belief) -> f64 {
        self.correct_reward * belief.max_prob() + self.step_cost
    }
}

/// Sizes of a label-identification POMDP. The transition over labels is the
/// identity and is therefore not stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldSpec {
    pub num_labels: usize,
    pub num_actions: usize,
    pub num_observations: usize,
}

/// Observation function `P(o | s, c)` as a dense table.
///
/// Every `(s, c)` slice is a distribution over observations. Stored
/// column-wise so the likelihood vector over states for a fixed `(c, o)` is
/// contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    num_states: usize,
    num_configs: usize,
    num_observations: usize,
    table: Vec<f64>,
    per_class_normalizers: Vec<f64>,
    support: Vec<Vec<usize>>,
}

impl LikelihoodModel {
    /// `table[(c * num_observations + o) * num_states + s] = P(o | s, c)`.
    pub fn new(
        num_states: usize,
        num_configs: usize,
        num_observations: usize,
        table: Vec<f64>,
        per_class_normalizers: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_configs == 0 || num_observations == 0 {
            return Err(Error::InvalidModel("empty dimension".into()));
        }
        let expected = num_states * num_configs * num_observations;
        if table.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: table.len(),
            });
        }
        if let Some(p) = table.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidModel(format!("entry {p} is negative or not finite")));
        }
        let mut model = Self {
            num_states,
            num_configs,
            num_observations,
            table,
            per_class_normalizers,
            support: Vec::new(),
        };
        for c in 0..num_configs {
            for s in 0..num_states {
                let total: f64 = (0..num_observations).map(|o| model.prob(s, c, o)).sum();
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidModel(format!("P(. | s={s}, c={c}) sums to {total}")));
                }
            }
        }
        model.support = (0..num_configs)
            .map(|c| {
                (0..num_observations)
                    .filter(|&o| model.column(c, o).iter().any(|p| *p > 0.0))
                    .collect()
            })
            .collect();
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_configs(&self) -> usize {
        self.num_configs
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn per_class_normalizers(&self) -> &[f64] {
        &self.per_class_normalizers
    }

    pub fn prob(&self, state: usize, config: usize, obs: usize) -> f64 {
        self.table[(config * self.num_observations + obs) * self.num_states + state]
    }

    /// Likelihood vector over states for observation `obs` under `config`.
    pub fn column(&self, config: usize, obs: usize) -> &[f64] {
        let start = (config * self.num_observations + obs) * self.num_states;
        &self.table[start..start + self.num_states]
    }

    /// Observations some state can emit under `config`, ascending.
    pub fn support(&self, config: usize) -> &[usize] {
        &self.support[config]
    }
}

/// Pr(o | c, b) = Σ_s b(s) · P(o | s, c).
pub fn evidence_prob(belief: &Belief, config: usize, obs: usize, model: &LikelihoodModel) -> f64 {
    belief
        .probs()
        .iter()
        .zip(model.column(config, obs))
        .map(|(b, p)| b * p)
        .sum()
}

/// Bayes update of `belief` after observing `obs` under `config`.
pub fn belief_update(belief: &Belief, config: usize, obs: usize, model: &LikelihoodModel) -> Result<Belief> {
    if belief.len() != model.num_states() {
        return Err(Error::DimensionMismatch {
            expected: model.num_states(),
            found: belief.len(),
        });
    }
    let weights: Vec<f64> = belief
        .probs()
        .iter()
        .zip(model.column(config, obs))
        .map(|(b, p)| b * p)
        .collect();
    Belief::from_weights(weights)
}

/// A possible next observation together with its probability and the
/// resulting belief.
#[derive(Debug, Clone)]
pub struct Successor {
    pub obs: usize,
    pub evidence: f64,
    pub belief: Belief,
}

/// All observations with evidence above `min_evidence`, in ascending
/// observation order.
pub fn successors(belief: &Belief, config: usize, model: &LikelihoodModel, min_evidence: f64) -> Vec<Successor> {
    let floor = min_evidence.max(ZERO_EVIDENCE_TOL);
    let mut out = Vec::new();
    for &obs in model.support(config) {
        let column = model.column(config, obs);
        let weights: Vec<f64> = belief.probs().iter().zip(column).map(|(b, p)| b * p).collect();
        let evidence: f64 = weights.iter().sum();
        if evidence > floor {
            let probs = weights.into_iter().map(|w| w / evidence).collect();
            out.push(Successor {
                obs,
                evidence,
                belief: Belief(probs),
            });
        }
    }
    out
}

/// Pr(b_target | b, c): total evidence of the observations whose update lands
/// within `tol` (L1) of `target`.
pub fn belief_transition_prob(
    belief: &Belief,
    config: usize,
    target: &Belief,
    model: &LikelihoodModel,
    tol: f64,
) -> f64 {
    successors(belief, config, model, 0.0)
        .into_iter()
        .filter(|succ| succ.belief.l1(target) <= tol)
        .map(|succ| succ.evidence)
        .sum()
}

/// Σ_s b(s) · R(s, a), with `rewards[s][a]`.
pub fn expected_reward(belief: &Belief, action: usize, rewards: &[Vec<f64>]) -> f64 {
    belief.probs().iter().zip(rewards).map(|(b, row)| b * row[action]).sum()
}

/// Per-state reward of sensing under `config` and then classifying by the
/// argmax of the updated belief: R(s) = correct · Pr(argmax b' = s | s) + step.
pub fn classification_rewards(belief: &Belief, config: usize, model: &LikelihoodModel, spec: &RewardSpec) -> Vec<f64> {
    let mut rewards = vec![spec.step_cost; model.num_states()];
    for succ in successors(belief, config, model, 0.0) {
        let label = succ.belief.argmax();
        rewards[label] += spec.correct_reward * model.prob(label, config, succ.obs);
    }
    rewards
}

/// L1 distance between beliefs, in [0, 2].
pub fn belief_distance(a: &Belief, b: &Belief) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.l1(b))
}

/// Builds a single-configuration model from raw per-observation class scores
/// (`raw_scores[o][s]`), dividing every class by its total over observations.
pub fn normalize_likelihoods(raw_scores: &[Vec<f64>]) -> Result<LikelihoodModel> {
    let groups = vec![0; raw_scores.len()];
    let (columns, normalizers) = normalize_grouped(raw_scores, &groups, 1)?;
    let num_states = normalizers.len();
    LikelihoodModel::new(num_states, 1, raw_scores.len(), columns.concat(), normalizers)
}

/// Per-class normalization within observation groups.
///
/// Returns the normalized column of every observation and the normalizers
/// laid out as `normalizers[group * num_states + s]`.
pub fn normalize_grouped(
    raw_scores: &[Vec<f64>],
    groups: &[usize],
    num_groups: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let num_states = raw_scores.first().map(Vec::len).unwrap_or(0);
    if num_states == 0 {
        return Err(Error::InvalidModel("no scores".into()));
    }
    if groups.len() != raw_scores.len() {
        return Err(Error::DimensionMismatch {
            expected: raw_scores.len(),
            found: groups.len(),
        });
    }
    let mut totals = vec![0.0; num_groups * num_states];
    for (row, &g) in raw_scores.iter().zip(groups) {
        if row.len() != num_states {
            return Err(Error::DimensionMismatch {
                expected: num_states,
                found: row.len(),
            });
        }
        if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidModel(format!("score {p} is negative or not finite")));
        }
        for (s, p) in row.iter().enumerate() {
            totals[g * num_states + s] += p;
        }
    }
    for (i, total) in totals.iter().enumerate() {
        if !(*total > ZERO_EVIDENCE_TOL) {
            return Err(Error::DegenerateClass {
                class: i % num_states,
                total: *total,
            });
        }
    }
    let columns = raw_scores
        .iter()
        .zip(groups)
        .map(|(row, &g)| {
            row.iter()
                .enumerate()
                .map(|(s, p)| p / totals[g * num_states + s])
                .collect()
        })
        .collect();
    Ok((columns, totals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two states, one configuration, two observations with likelihood
    /// columns (0.8, 0.2) and (0.2, 0.8).
    fn two_state_model() -> LikelihoodModel {
        normalize_likelihoods(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap()
    }

    fn b(p: &[f64]) -> Belief {
        Belief::new(p.to_vec()).unwrap()
    }

    #[test]
    fn update_examples() {
        let m = two_state_model();
        let up = belief_update(&b(&[0.5, 0.5]), 0, 0, &m).unwrap();
        assert!((up.probs()[0] - 0.8).abs() < 1e-12);

        let flat = normalize_likelihoods(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let up = belief_update(&b(&[0.3, 0.7]), 0, 1, &flat).unwrap();
        assert!((up.probs()[0] - 0.3).abs() < 1e-12);

        let up = belief_update(&b(&[1.0, 0.0]), 0, 1, &m).unwrap();
        assert_eq!(up.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn update_rejects_impossible_observation() {
        let m = normalize_likelihoods(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let err = belief_update(&b(&[1.0, 0.0]), 0, 1, &m).unwrap_err();
        assert!(matches!(err, Error::ZeroEvidence { .. }));
    }

    #[test]
    fn evidence_examples() {
        let m = two_state_model();
        assert!((evidence_prob(&b(&[0.5, 0.5]), 0, 0, &m) - 0.5).abs() < 1e-15);
        assert!((evidence_prob(&b(&[1.0, 0.0]), 0, 0, &m) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn transition_examples() {
        let m = two_state_model();
        let p = belief_transition_prob(&b(&[0.5, 0.5]), 0, &b(&[0.8, 0.2]), &m, 1e-9);
        assert!((p - 0.5).abs() < 1e-12);
        let p = belief_transition_prob(&b(&[0.5, 0.5]), 0, &b(&[0.3, 0.7]), &m, 1e-9);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn reward_examples() {
        let table = vec![vec![3.0], vec![0.0]];
        assert_eq!(expected_reward(&b(&[1.0, 0.0]), 0, &table), 3.0);
        let table = vec![vec![1.0], vec![0.0]];
        assert_eq!(expected_reward(&b(&[0.5, 0.5]), 0, &table), 0.5);
    }

    #[test]
    fn classification_reward_is_expected_max_posterior() {
        let m = two_state_model();
        let spec = RewardSpec::default();
        let belief = b(&[0.5, 0.5]);
        let table: Vec<Vec<f64>> = classification_rewards(&belief, 0, &m, &spec)
            .into_iter()
            .map(|r| vec![r])
            .collect();
        // Either observation leaves a 0.8 posterior on its argmax.
        assert!((expected_reward(&belief, 0, &table) - (0.8 + spec.step_cost)).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(belief_distance(&b(&[0.3, 0.7]), &b(&[0.3, 0.7])).unwrap(), 0.0);
        assert_eq!(belief_distance(&b(&[1.0, 0.0]), &b(&[0.0, 1.0])).unwrap(), 2.0);
        assert!(matches!(
            belief_distance(&b(&[1.0, 0.0]), &b(&[0.0, 0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let m = normalize_likelihoods(&[vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(m.prob(0, 0, 0), 0.5);
        assert_eq!(m.per_class_normalizers(), &[4.0]);

        let already = vec![vec![0.25, 0.6], vec![0.75, 0.4]];
        let m = normalize_likelihoods(&already).unwrap();
        for (o, row) in already.iter().enumerate() {
            for (s, p) in row.iter().enumerate() {
                assert!((m.prob(s, 0, o) - p).abs() < 1e-12);
            }
        }

        let err = normalize_likelihoods(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateClass { class: 1, .. }));
    }

    #[test]
    fn belief_validation() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        assert!(Belief::new(vec![f64::NAN, 1.0]).is_err());
        assert_eq!(Belief::point(3, 2).argmax(), 2);
        assert_eq!(Belief::uniform(4).argmax(), 0);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Belief> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| Belief::from_weights(w).ok())
    }

    fn random_model(s: usize, c: usize, o: usize) -> impl Strategy<Value = LikelihoodModel> {
        prop::collection::vec(0.01f64..1.0, s * c * o).prop_map(move |raw| {
            let mut table = vec![0.0; s * c * o];
            for ci in 0..c {
                for si in 0..s {
                    let total: f64 = (0..o).map(|oi| raw[(ci * o + oi) * s + si]).sum();
                    for oi in 0..o {
                        table[(ci * o + oi) * s + si] = raw[(ci * o + oi) * s + si] / total;
                    }
                }
            }
            LikelihoodModel::new(s, c, o, table, vec![]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn evidence_matches_brute_force_sum(
            belief in simplex(4),
            model in random_model(4, 2, 5),
            config in 0usize..2,
            obs in 0usize..5,
        ) {
            let mut direct = 0.0;
            for s in 0..4 {
                direct += belief.probs()[s] * model.prob(s, config, obs);
            }
            prop_assert!((evidence_prob(&belief, config, obs, &model) - direct).abs() < 1e-12);
        }

        #[test]
        fn successor_partition_sums_to_one(
            belief in simplex(3),
            model in random_model(3, 2, 6),
            config in 0usize..2,
        ) {
            // Group successors by (approximately) equal belief and sum the
            // transition probability of one representative per group.
            let succs = successors(&belief, config, &model, 0.0);
            let mut reps: Vec<Belief> = Vec::new();
            for s in &succs {
                if !reps.iter().any(|r| r.l1(&s.belief) <= 1e-12) {
                    reps.push(s.belief.clone());
                }
            }
            let total: f64 = reps
                .iter()
                .map(|r| belief_transition_prob(&belief, config, r, &model, 1e-12))
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn expected_reward_is_linear(
            b1 in simplex(3),
            b2 in simplex(3),
            alpha in 0.0f64..1.0,
            table in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3),
        ) {
            let mix: Vec<f64> = b1.probs().iter().zip(b2.probs())
                .map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
            let mix = Belief::from_weights(mix).unwrap();
            for a in 0..2 {
                let lhs = expected_reward(&mix, a, &table);
                let rhs = alpha * expected_reward(&b1, a, &table)
                    + (1.0 - alpha) * expected_reward(&b2, a, &table);
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn distance_is_a_metric(a in simplex(4), b in simplex(4), c in simplex(4)) {
            let ab = belief_distance(&a, &b).unwrap();
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
            prop_assert_eq!(ab, belief_distance(&b, &a).unwrap());
            prop_assert!(belief_distance(&a, &a).unwrap() == 0.0);
            let ac = belief_distance(&a, &c).unwrap();
            let bc = belief_distance(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn sequential_updates_equal_one_product_update(
            prior in simplex(3),
            model in random_model(3, 2, 4),
            history in prop::collection::vec((0usize..2, 0usize..4), 1..6),
        ) {
            let mut belief = prior.clone();
            let mut weights = prior.probs().to_vec();
            for &(c, o) in &history {
                belief = belief_update(&belief, c, o, &model).unwrap();
                for (s, w) in weights.iter_mut().enumerate() {
                    *w *= model.prob(s, c, o);
                }
            }
            let direct = Belief::from_weights(weights).unwrap();
            prop_assert!(belief.l1(&direct) < 1e-9);
        }

        #[test]
        fn normalized_classes_sum_to_one(
            raw in prop::collection::vec(prop::collection::vec(0.001f64..5.0, 3), 1..9),
        ) {
            let m = normalize_likelihoods(&raw).unwrap();
            for s in 0..3 {
                let total: f64 = (0..raw.len()).map(|o| m.prob(s, 0, o)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
