//! Exact evaluation of a fixed deterministic Markov policy.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::lex::RewardSpec;
use crate::mdp::{PreferenceIndex, ValidatedInstance, ValueVector};

/// Slack applied toward the smaller rank when testing `F(r) >= tau`.
pub const QUANTILE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    ActionOutOfRange { epoch: usize, state: usize, action: usize },
    RankOutOfRange { rank: usize, max: usize },
    TauOutOfRange(f64),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            EvalError::ActionOutOfRange { epoch, state, action } => {
                write!(f, "policy picks action {action} at (t={epoch}, s={state}), out of range")
            }
            EvalError::RankOutOfRange { rank, max } => {
                write!(f, "rank {rank} outside 0..={max}")
            }
            EvalError::TauOutOfRange(tau) => write!(f, "tau {tau} outside (0, 1]"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Nonstationary deterministic Markov policy: one action per `(t, s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyTable {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl PolicyTable {
    /// Builds a policy from a row-major `horizon × num_states` table.
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self, EvalError> {
        if actions.len() != horizon * num_states {
            return Err(EvalError::DimensionMismatch {
                what: "policy table entries",
                expected: horizon * num_states,
                found: actions.len(),
            });
        }
        Ok(PolicyTable { horizon, num_states, actions })
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        PolicyTable { horizon, num_states, actions: vec![action; horizon * num_states] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn action(&self, epoch: usize, state: usize) -> usize {
        self.actions[epoch * self.num_states + state]
    }

    pub fn set(&mut self, epoch: usize, state: usize, action: usize) {
        self.actions[epoch * self.num_states + state] = action;
    }

    /// Actions of one epoch, indexed by state.
    pub fn epoch(&self, epoch: usize) -> &[usize] {
        &self.actions[epoch * self.num_states..(epoch + 1) * self.num_states]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// Checks the table against an instance's dimensions and action count.
    pub fn check(&self, instance: &ValidatedInstance) -> Result<(), EvalError> {
        if self.horizon != instance.horizon {
            return Err(EvalError::DimensionMismatch {
                what: "policy horizon",
                expected: instance.horizon,
                found: self.horizon,
            });
        }
        if self.num_states != instance.num_states {
            return Err(EvalError::DimensionMismatch {
                what: "policy states",
                expected: instance.num_states,
                found: self.num_states,
            });
        }
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                let a = self.action(t, s);
                if a >= instance.num_actions {
                    return Err(EvalError::ActionOutOfRange { epoch: t, state: s, action: a });
                }
            }
        }
        Ok(())
    }
}

/// Outcome distribution at the horizon: `mass[0]` is the timeout outcome,
/// `mass[k]` the k-th end state.
#[derive(Debug, Clone, PartialEq)]
pub struct EndDistribution {
    pub mass: Vec<f64>,
}

impl EndDistribution {
    /// Largest rank `n`.
    pub fn max_rank(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Pushes the initial distribution forward through the policy for `horizon`
/// steps and reads off the outcome masses. Whatever sits outside the end
/// states at the horizon is timeout mass.
pub fn propagate(
    instance: &ValidatedInstance,
    policy: &PolicyTable,
) -> Result<EndDistribution, EvalError> {
    policy.check(instance)?;
    let ns = instance.num_states;
    let mut current = instance.initial_distribution.clone();
    let mut next = vec![0.0; ns];
    for t in 0..instance.horizon {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = instance.row(s, policy.action(t, s));
            for (acc, p) in next.iter_mut().zip(row) {
                *acc += mass * p;
            }
        }
        core::mem::swap(&mut current, &mut next);
    }

    let mut mass = vec![0.0; instance.num_end_states() + 1];
    for (s, &m) in current.iter().enumerate() {
        let k = instance.end_rank(s).map_or(0, PreferenceIndex::get);
        mass[k] += m;
    }
    Ok(EndDistribution { mass })
}

/// `F(rank)`: total mass on outcomes no better than `rank`.
pub fn cdf(dist: &EndDistribution, rank: PreferenceIndex) -> Result<f64, EvalError> {
    let max = dist.max_rank();
    if rank.0 > max {
        return Err(EvalError::RankOutOfRange { rank: rank.0, max });
    }
    Ok(dist.mass[..=rank.0].iter().sum())
}

/// Smallest rank whose CDF reaches `tau`.
pub fn lower_quantile(dist: &EndDistribution, tau: f64) -> Result<PreferenceIndex, EvalError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(EvalError::TauOutOfRange(tau));
    }
    let mut acc = 0.0;
    for (k, m) in dist.mass.iter().enumerate() {
        acc += m;
        if acc >= tau - QUANTILE_SLACK {
            return Ok(PreferenceIndex(k));
        }
    }
    // The CDF is 1 at the top rank by definition; rounding may leave it short.
    Ok(PreferenceIndex(dist.max_rank()))
}

fn check_rewards(instance: &ValidatedInstance, rewards: &RewardSpec) -> Result<(), EvalError> {
    let expected = instance.transitions.len();
    for level in rewards.levels() {
        if level.len() != expected {
            return Err(EvalError::DimensionMismatch {
                what: "reward tensor entries",
                expected,
                found: level.len(),
            });
        }
    }
    Ok(())
}

/// Per-start-state value vectors of a policy at epoch 0: entry `s` holds
/// `[V_1(s), …, V_L(s)]`.
pub fn evaluate_state_values(
    instance: &ValidatedInstance,
    rewards: &RewardSpec,
    policy: &PolicyTable,
) -> Result<Vec<ValueVector>, EvalError> {
    policy.check(instance)?;
    check_rewards(instance, rewards)?;
    let ns = instance.num_states;
    let mut out: Vec<ValueVector> = (0..ns).map(|_| ValueVector(Vec::new())).collect();
    let mut tail = vec![0.0; ns];
    let mut head = vec![0.0; ns];
    for level in rewards.levels() {
        tail.iter_mut().for_each(|x| *x = 0.0);
        for t in (0..instance.horizon).rev() {
            for (s, v) in head.iter_mut().enumerate() {
                let a = policy.action(t, s);
                let base = instance.index(s, a, 0);
                let row = instance.row(s, a);
                *v = row
                    .iter()
                    .zip(&level[base..base + ns])
                    .zip(&tail)
                    .map(|((p, r), w)| p * (r + w))
                    .sum();
            }
            core::mem::swap(&mut head, &mut tail);
        }
        for (s, v) in tail.iter().enumerate() {
            out[s].0.push(*v);
        }
    }
    Ok(out)
}

/// Expected total reward of each level under the initial distribution.
pub fn evaluate_values(
    instance: &ValidatedInstance,
    rewards: &RewardSpec,
    policy: &PolicyTable,
) -> Result<ValueVector, EvalError> {
    let per_state = evaluate_state_values(instance, rewards, policy)?;
    Ok(weight_by(&instance.initial_distribution, &per_state, rewards.num_levels()))
}

/// Averages per-state value vectors under a start distribution.
pub fn weight_by(start: &[f64], per_state: &[ValueVector], levels: usize) -> ValueVector {
    let mut values = vec![0.0; levels];
    for (mu, v) in start.iter().zip(per_state) {
        if *mu == 0.0 {
            continue;
        }
        for (acc, x) in values.iter_mut().zip(v.iter()) {
            *acc += mu * x;
        }
    }
    ValueVector(values)
}
