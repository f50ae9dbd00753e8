//! Backward induction for lexicographically ordered reward levels.
//!
//! At each epoch (last to first) the levels are processed in priority order.
//! Level `i` maximizes its Q-values over the actions that survived levels
//! `1..i`, and keeps only the actions within `eps` of that maximum. The
//! policy takes the lowest-index action left after the last level.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::eval::PolicyTable;
use crate::mdp::{ValidatedInstance, ValueVector};

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    NonFiniteReward { level: usize, state: usize, action: usize, next: usize },
    NonZeroEndReward { level: usize, state: usize, action: usize },
    NoLevels,
    BadEps(f64),
    /// Unreachable unless the filtration logic is broken.
    EmptyActionSet { level: usize, epoch: usize, state: usize },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            SolveError::NonFiniteReward { level, state, action, next } => {
                write!(f, "reward level {level} is not finite at ({state},{action},{next})")
            }
            SolveError::NonZeroEndReward { level, state, action } => write!(
                f,
                "reward level {level} pays at end state {state} under action {action}"
            ),
            SolveError::NoLevels => write!(f, "reward specification has no levels"),
            SolveError::BadEps(eps) => write!(f, "tolerance {eps} must be finite and >= 0"),
            SolveError::EmptyActionSet { level, epoch, state } => write!(
                f,
                "empty action set at level {level}, epoch {epoch}, state {state}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolveError {}

/// Reward levels `R_1..R_L`, highest priority first, each a dense
/// `R(s, a, s')` tensor laid out like the transition tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    levels: Vec<Vec<f64>>,
}

impl RewardSpec {
    /// Checks shapes, finiteness, and that no level pays for staying in an end state.
    pub fn new(instance: &ValidatedInstance, levels: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        let ns = instance.num_states;
        let na = instance.num_actions;
        let expected = ns * na * ns;
        for (i, level) in levels.iter().enumerate() {
            if level.len() != expected {
                return Err(SolveError::DimensionMismatch {
                    what: "reward tensor entries",
                    expected,
                    found: level.len(),
                });
            }
            if let Some(pos) = level.iter().position(|r| !r.is_finite()) {
                return Err(SolveError::NonFiniteReward {
                    level: i,
                    state: pos / (na * ns),
                    action: (pos / ns) % na,
                    next: pos % ns,
                });
            }
            for &e in &instance.end_states {
                for a in 0..na {
                    if level[instance.index(e, a, e)] != 0.0 {
                        return Err(SolveError::NonZeroEndReward { level: i, state: e, action: a });
                    }
                }
            }
        }
        Ok(RewardSpec { levels })
    }

    /// A level that pays nothing anywhere.
    pub fn zero_level(instance: &ValidatedInstance) -> Vec<f64> {
        vec![0.0; instance.transitions.len()]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn into_levels(self) -> Vec<Vec<f64>> {
        self.levels
    }
}

/// Rewards with the next state integrated out: `R_i(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedRewards {
    num_actions: usize,
    levels: Vec<Vec<f64>>,
}

impl ExpectedRewards {
    #[inline]
    pub fn get(&self, level: usize, state: usize, action: usize) -> f64 {
        self.levels[level][state * self.num_actions + action]
    }

    /// Level `i` as a row-major `|S| × |A|` table.
    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }
}

/// `R_i(s, a) = Σ_{s'} P(s, a, s') R_i(s, a, s')`.
pub fn marginalize_rewards(
    instance: &ValidatedInstance,
    rewards: &RewardSpec,
) -> Result<ExpectedRewards, SolveError> {
    let ns = instance.num_states;
    let na = instance.num_actions;
    let mut levels = Vec::with_capacity(rewards.num_levels());
    for level in rewards.levels() {
        if level.len() != instance.transitions.len() {
            return Err(SolveError::DimensionMismatch {
                what: "reward tensor entries",
                expected: instance.transitions.len(),
                found: level.len(),
            });
        }
        let mut table = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let base = instance.index(s, a, 0);
                let mut acc = 0.0;
                for (p, r) in instance.row(s, a).iter().zip(&level[base..base + ns]) {
                    acc += p * r;
                }
                table[s * na + a] = acc;
            }
        }
        levels.push(table);
    }
    Ok(ExpectedRewards { num_actions: na, levels })
}

/// A sorted, duplicate-free set of action indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(Vec<usize>);

impl ActionSet {
    pub fn full(num_actions: usize) -> Self {
        ActionSet((0..num_actions).collect())
    }

    /// Sorts and dedups the given actions.
    pub fn from_actions(mut actions: Vec<usize>) -> Self {
        actions.sort_unstable();
        actions.dedup();
        ActionSet(actions)
    }

    pub fn contains(&self, action: usize) -> bool {
        self.0.binary_search(&action).is_ok()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &ActionSet) -> bool {
        self.0.iter().all(|a| other.contains(*a))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Maximum of `q` over `allowed`, and the allowed actions within `eps` of it.
/// `None` if `allowed` is empty.
pub fn filter_argmax(q: &[f64], allowed: &ActionSet, eps: f64) -> Option<(f64, ActionSet)> {
    let best = allowed.iter().map(|a| q[a]).reduce(f64::max)?;
    let kept = allowed.iter().filter(|&a| q[a] >= best - eps).collect();
    Some((best, ActionSet(kept)))
}

/// One restricted Bellman backup of level `level` at epoch `epoch`.
///
/// `expected` is the level's `|S| × |A|` expected reward table, `v_next` the
/// level's values at `epoch + 1`, and `allowed` the per-state actions that
/// survived the higher levels. Returns the level's values at `epoch` and the
/// surviving action sets for the next level.
pub fn restricted_backup(
    instance: &ValidatedInstance,
    level: usize,
    epoch: usize,
    expected: &[f64],
    v_next: &[f64],
    allowed: &[ActionSet],
    eps: f64,
) -> Result<(Vec<f64>, Vec<ActionSet>), SolveError> {
    let ns = instance.num_states;
    let na = instance.num_actions;
    let mut values = Vec::with_capacity(ns);
    let mut kept = Vec::with_capacity(ns);
    let mut q = vec![f64::NEG_INFINITY; na];
    for (s, actions) in allowed.iter().enumerate() {
        for a in actions.iter() {
            let mut acc = 0.0;
            for (p, v) in instance.row(s, a).iter().zip(v_next) {
                acc += p * v;
            }
            q[a] = expected[s * na + a] + acc;
        }
        let (best, out) = filter_argmax(&q, actions, eps)
            .ok_or(SolveError::EmptyActionSet { level, epoch, state: s })?;
        values.push(best);
        kept.push(out);
    }
    Ok((values, kept))
}

/// `V_{i,t}(s)` for every level, epoch `0..=T` and state. The slice at `T`
/// is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTensor {
    num_levels: usize,
    horizon: usize,
    num_states: usize,
    values: Vec<f64>,
}

impl ValueTensor {
    fn zeros(num_levels: usize, horizon: usize, num_states: usize) -> Self {
        ValueTensor {
            num_levels,
            horizon,
            num_states,
            values: vec![0.0; num_levels * (horizon + 1) * num_states],
        }
    }

    fn offset(&self, level: usize, epoch: usize) -> usize {
        (level * (self.horizon + 1) + epoch) * self.num_states
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, level: usize, epoch: usize, state: usize) -> f64 {
        self.values[self.offset(level, epoch) + state]
    }

    /// Values of one level at one epoch, indexed by state.
    pub fn slice(&self, level: usize, epoch: usize) -> &[f64] {
        let o = self.offset(level, epoch);
        &self.values[o..o + self.num_states]
    }

    fn slice_mut(&mut self, level: usize, epoch: usize) -> &mut [f64] {
        let o = self.offset(level, epoch);
        &mut self.values[o..o + self.num_states]
    }

    /// `[V_{1,t}(s), …, V_{L,t}(s)]`.
    pub fn state_vector(&self, epoch: usize, state: usize) -> ValueVector {
        ValueVector((0..self.num_levels).map(|i| self.get(i, epoch, state)).collect())
    }

    /// Epoch-0 values averaged under a start distribution.
    pub fn at_start(&self, start: &[f64]) -> ValueVector {
        ValueVector(
            (0..self.num_levels)
                .map(|i| {
                    start
                        .iter()
                        .zip(self.slice(i, 0))
                        .filter(|(mu, _)| **mu != 0.0)
                        .map(|(mu, v)| mu * v)
                        .sum()
                })
                .collect(),
        )
    }
}

/// Nested action sets `A_0 ⊇ A_1 ⊇ … ⊇ A_L` for every `(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFiltration {
    num_levels: usize,
    num_states: usize,
    sets: Vec<ActionSet>,
}

impl ActionFiltration {
    /// `A_i^t(s)`; level 0 is the full action set.
    pub fn get(&self, epoch: usize, state: usize, level: usize) -> &ActionSet {
        &self.sets[(epoch * self.num_states + state) * (self.num_levels + 1) + level]
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexSolution {
    pub policy: PolicyTable,
    pub values: ValueTensor,
    pub filtration: ActionFiltration,
}

impl LexSolution {
    /// Optimal value vector under the instance's initial distribution.
    pub fn value_at_start(&self, instance: &ValidatedInstance) -> ValueVector {
        self.values.at_start(&instance.initial_distribution)
    }
}

/// Solves the lexicographic MDP by backward induction over epochs
/// `T-1..=0`, chaining restricted backups across levels at each epoch.
pub fn flmdp_solve(
    instance: &ValidatedInstance,
    rewards: &RewardSpec,
    eps: f64,
) -> Result<LexSolution, SolveError> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(SolveError::BadEps(eps));
    }
    let num_levels = rewards.num_levels();
    if num_levels == 0 {
        return Err(SolveError::NoLevels);
    }
    let expected = marginalize_rewards(instance, rewards)?;
    let ns = instance.num_states;
    let horizon = instance.horizon;
    let full = ActionSet::full(instance.num_actions);

    let mut values = ValueTensor::zeros(num_levels, horizon, ns);
    let mut sets = vec![ActionSet::default(); horizon * ns * (num_levels + 1)];
    let mut policy = PolicyTable::constant(horizon, ns, 0);

    for t in (0..horizon).rev() {
        let mut allowed = vec![full.clone(); ns];
        for level in 0..num_levels {
            for (s, set) in allowed.iter().enumerate() {
                sets[(t * ns + s) * (num_levels + 1) + level] = set.clone();
            }
            let (v, kept) = restricted_backup(
                instance,
                level,
                t,
                expected.level(level),
                values.slice(level, t + 1),
                &allowed,
                eps,
            )?;
            values.slice_mut(level, t).copy_from_slice(&v);
            allowed = kept;
        }
        for (s, set) in allowed.into_iter().enumerate() {
            let a = set.first().ok_or(SolveError::EmptyActionSet {
                level: num_levels,
                epoch: t,
                state: s,
            })?;
            policy.set(t, s, a);
            sets[(t * ns + s) * (num_levels + 1) + num_levels] = set;
        }
    }

    Ok(LexSolution {
        policy,
        values,
        filtration: ActionFiltration { num_levels, num_states: ns, sets },
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_state_values, evaluate_values};
    use crate::mdp::{validate, MdpInstance, PreferenceIndex, DEFAULT_EPS};
    use crate::quantile::build_quantile_reward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_action() -> ValidatedInstance {
        let mut m = MdpInstance::zeroed(3, 2, 1);
        m.set(0, 0, 1, 1.0);
        m.set(0, 1, 2, 1.0);
        for e in [1, 2] {
            for a in 0..2 {
                m.set(e, a, e, 1.0);
            }
        }
        m.end_states = vec![1, 2];
        m.initial_distribution = vec![1.0, 0.0, 0.0];
        validate(m).unwrap()
    }

    // Small random instance with 1/8-grid probabilities; the last `ends`
    // states are absorbing end states.
    fn random_instance(rng: &mut ChaCha8Rng) -> ValidatedInstance {
        let ns = rng.random_range(2..=5);
        let na = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=3);
        let ends = rng.random_range(1..ns);
        let mut m = MdpInstance::zeroed(ns, na, horizon);
        for s in 0..ns {
            for a in 0..na {
                if s >= ns - ends {
                    m.set(s, a, s, 1.0);
                    continue;
                }
                for _ in 0..8 {
                    let next = rng.random_range(0..ns);
                    let p = m.prob(s, a, next);
                    m.set(s, a, next, p + 0.125);
                }
            }
        }
        m.end_states = (ns - ends..ns).collect();
        m.initial_distribution[0] = 1.0;
        validate(m).unwrap()
    }

    fn random_rewards(rng: &mut ChaCha8Rng, inst: &ValidatedInstance, levels: usize) -> RewardSpec {
        let raw = (0..levels)
            .map(|_| {
                let mut level = vec![0.0; inst.transitions.len()];
                for s in 0..inst.num_states {
                    if inst.is_end(s) {
                        continue;
                    }
                    for a in 0..inst.num_actions {
                        for next in 0..inst.num_states {
                            if rng.random_bool(0.4) {
                                level[inst.index(s, a, next)] = 1.0;
                            }
                        }
                    }
                }
                level
            })
            .collect();
        RewardSpec::new(inst, raw).unwrap()
    }

    #[test]
    fn marginalizes_half_row() {
        let mut m = MdpInstance::zeroed(2, 1, 1);
        m.set(0, 0, 0, 0.5);
        m.set(0, 0, 1, 0.5);
        m.set(1, 0, 1, 1.0);
        m.end_states = vec![1];
        m.initial_distribution = vec![1.0, 0.0];
        let inst = validate(m).unwrap();
        let mut level = vec![0.0; 4];
        level[inst.index(0, 0, 0)] = 1.0;
        let r = marginalize_rewards(&inst, &RewardSpec::new(&inst, vec![level]).unwrap()).unwrap();
        assert_eq!(r.get(0, 0, 0), 0.5);
        assert_eq!(r.get(0, 1, 0), 0.0);
    }

    #[test]
    fn marginal_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let inst = random_instance(&mut rng);
            let rewards = random_rewards(&mut rng, &inst, 2);
            let r = marginalize_rewards(&inst, &rewards).unwrap();
            for (i, level) in rewards.levels().iter().enumerate() {
                for s in 0..inst.num_states {
                    for a in 0..inst.num_actions {
                        let direct: f64 = (0..inst.num_states)
                            .map(|n| inst.prob(s, a, n) * level[inst.index(s, a, n)])
                            .sum();
                        assert!((r.get(i, s, a) - direct).abs() < 1e-12);
                        if inst.is_end(s) {
                            assert_eq!(r.get(i, s, a), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reward_spec_rejects_end_payout() {
        let inst = two_action();
        let mut level = RewardSpec::zero_level(&inst);
        level[inst.index(2, 1, 2)] = 1.0;
        assert_eq!(
            RewardSpec::new(&inst, vec![level]),
            Err(SolveError::NonZeroEndReward { level: 0, state: 2, action: 1 })
        );
        let mut level = RewardSpec::zero_level(&inst);
        level[inst.index(0, 1, 2)] = f64::INFINITY;
        assert_eq!(
            RewardSpec::new(&inst, vec![level]),
            Err(SolveError::NonFiniteReward { level: 0, state: 0, action: 1, next: 2 })
        );
    }

    #[test]
    fn argmax_keeps_ties() {
        let q = [0.3, 0.7, 0.7];
        let (v, kept) = filter_argmax(&q, &ActionSet::full(3), 1e-9).unwrap();
        assert_eq!(v, 0.7);
        assert_eq!(kept.as_slice(), &[1, 2]);
        let (v, kept) = filter_argmax(&q, &ActionSet::from_actions(vec![0, 1]), 1e-9).unwrap();
        assert_eq!(v, 0.7);
        assert_eq!(kept.as_slice(), &[1]);
        assert!(filter_argmax(&q, &ActionSet::default(), 1e-9).is_none());
    }

    #[test]
    fn backup_with_empty_set_errors() {
        let inst = two_action();
        let err = restricted_backup(
            &inst,
            0,
            0,
            &[0.0; 6],
            &[0.0; 3],
            &[ActionSet::full(2), ActionSet::default(), ActionSet::full(2)],
            1e-9,
        )
        .unwrap_err();
        assert_eq!(err, SolveError::EmptyActionSet { level: 0, epoch: 0, state: 1 });
    }

    #[test]
    fn single_action_matches_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut m = random_instance(&mut rng).into_inner();
            let na = m.num_actions;
            let ns = m.num_states;
            m.transitions = m
                .transitions
                .chunks(ns)
                .enumerate()
                .filter(|(i, _)| i % na == 0)
                .flat_map(|(_, row)| row.to_vec())
                .collect();
            m.num_actions = 1;
            let inst = validate(m).unwrap();
            let rewards = random_rewards(&mut rng, &inst, 2);
            let sol = flmdp_solve(&inst, &rewards, DEFAULT_EPS).unwrap();
            let per_state = evaluate_state_values(&inst, &rewards, &sol.policy).unwrap();
            for t in 0..inst.horizon {
                for s in 0..inst.num_states {
                    assert_eq!(sol.filtration.get(t, s, 2).as_slice(), &[0]);
                }
            }
            for (s, v) in per_state.iter().enumerate() {
                for i in 0..2 {
                    assert!((sol.values.get(i, 0, s) - v[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forced_optimum() {
        let inst = two_action();
        let r = RewardSpec::new(&inst, vec![build_quantile_reward(&inst, PreferenceIndex(2)).unwrap()])
            .unwrap();
        let sol = flmdp_solve(&inst, &r, DEFAULT_EPS).unwrap();
        assert_eq!(sol.policy.action(0, 0), 1);
        assert_eq!(sol.values.get(0, 0, 0), 1.0);
        assert_eq!(sol.values.slice(0, 1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn vacuous_first_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let inst = random_instance(&mut rng);
            let r2 = random_rewards(&mut rng, &inst, 1).into_levels().remove(0);
            let both =
                RewardSpec::new(&inst, vec![RewardSpec::zero_level(&inst), r2.clone()]).unwrap();
            let alone = RewardSpec::new(&inst, vec![r2]).unwrap();
            let a = flmdp_solve(&inst, &both, DEFAULT_EPS).unwrap();
            let b = flmdp_solve(&inst, &alone, DEFAULT_EPS).unwrap();
            assert_eq!(a.policy, b.policy);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let inst = two_action();
        let r = RewardSpec::new(&inst, vec![]).unwrap();
        assert_eq!(flmdp_solve(&inst, &r, 1e-9), Err(SolveError::NoLevels));
        let r = RewardSpec::new(&inst, vec![RewardSpec::zero_level(&inst)]).unwrap();
        assert_eq!(flmdp_solve(&inst, &r, -1.0), Err(SolveError::BadEps(-1.0)));
    }

    // Plain single-objective backward induction, written out independently.
    fn plain_backward_induction(inst: &ValidatedInstance, level: &[f64]) -> Vec<Vec<f64>> {
        let ns = inst.num_states;
        let mut out = vec![vec![0.0; ns]; inst.horizon + 1];
        for t in (0..inst.horizon).rev() {
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for a in 0..inst.num_actions {
                    let mut r = 0.0;
                    for n in 0..ns {
                        r += inst.prob(s, a, n) * level[inst.index(s, a, n)];
                    }
                    let mut acc = 0.0;
                    for n in 0..ns {
                        acc += inst.prob(s, a, n) * out[t + 1][n];
                    }
                    best = best.max(r + acc);
                }
                out[t][s] = best;
            }
        }
        out
    }

    #[test]
    fn solver_properties_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let inst = random_instance(&mut rng);
            let levels = rng.random_range(1..=3);
            let rewards = random_rewards(&mut rng, &inst, levels);
            let sol = flmdp_solve(&inst, &rewards, DEFAULT_EPS).unwrap();

            // nested, nonempty, full at level 0
            for t in 0..inst.horizon {
                for s in 0..inst.num_states {
                    assert_eq!(sol.filtration.get(t, s, 0), &ActionSet::full(inst.num_actions));
                    for i in 0..levels {
                        let outer = sol.filtration.get(t, s, i);
                        let inner = sol.filtration.get(t, s, i + 1);
                        assert!(!inner.is_empty());
                        assert!(inner.is_subset(outer));
                    }
                    assert!(sol.filtration.get(t, s, levels).contains(sol.policy.action(t, s)));
                }
            }

            // level 1 is plain backward induction, bit for bit
            let plain = plain_backward_induction(&inst, &rewards.levels()[0]);
            for (t, row) in plain.iter().enumerate() {
                assert_eq!(sol.values.slice(0, t), row.as_slice());
            }

            // the policy reproduces the tensor
            let v = evaluate_values(&inst, &rewards, &sol.policy).unwrap();
            let expected = sol.value_at_start(&inst);
            for i in 0..levels {
                assert!((v[i] - expected[i]).abs() < 1e-10);
            }

            // deterministic
            assert_eq!(flmdp_solve(&inst, &rewards, DEFAULT_EPS).unwrap().policy, sol.policy);
        }
    }
}
