//! Brute-force references over every deterministic Markov policy.
//!
//! Nothing here is clever on purpose: each routine enumerates the full
//! policy space, evaluates every policy exactly and filters explicit policy
//! sets. Only usable on small instances.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::eval::{evaluate_state_values, lower_quantile, propagate, weight_by, EvalError, PolicyTable};
use crate::lex::RewardSpec;
use crate::mdp::{PreferenceIndex, ValidatedInstance, ValueVector};
use crate::quantile::QuantileObjective;

/// Default cap on the number of enumerated policies.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// `count` is `None` when the policy count overflows `u64`.
    BudgetExceeded { count: Option<u64>, budget: u64 },
    EmptySet,
    Eval(EvalError),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::BudgetExceeded { count: Some(c), budget } => {
                write!(f, "{c} policies exceed the enumeration budget of {budget}")
            }
            OracleError::BudgetExceeded { count: None, budget } => {
                write!(f, "policy count overflows; budget is {budget}")
            }
            OracleError::EmptySet => write!(f, "policy set is empty"),
            OracleError::Eval(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}

impl From<EvalError> for OracleError {
    fn from(e: EvalError) -> Self {
        OracleError::Eval(e)
    }
}

/// `|A|^(|S|·T)`, or `None` on overflow.
pub fn policy_count(instance: &ValidatedInstance) -> Option<u64> {
    let cells = u32::try_from(instance.num_states.checked_mul(instance.horizon)?).ok()?;
    (instance.num_actions as u64).checked_pow(cells)
}

/// Every deterministic Markov policy, in lexicographic order of the
/// row-major action table.
#[derive(Debug, Clone)]
pub struct PolicyEnumeration {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    next: Option<Vec<usize>>,
}

/// Starts an enumeration after checking the policy count against `budget`.
pub fn enumerate_policies(
    instance: &ValidatedInstance,
    budget: u64,
) -> Result<PolicyEnumeration, OracleError> {
    match policy_count(instance) {
        Some(count) if count <= budget => Ok(PolicyEnumeration {
            horizon: instance.horizon,
            num_states: instance.num_states,
            num_actions: instance.num_actions,
            next: Some(vec![0; instance.horizon * instance.num_states]),
        }),
        count => Err(OracleError::BudgetExceeded { count, budget }),
    }
}

impl Iterator for PolicyEnumeration {
    type Item = PolicyTable;

    fn next(&mut self) -> Option<PolicyTable> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for cell in succ.iter_mut().rev() {
            *cell += 1;
            if *cell < self.num_actions {
                carry = false;
                break;
            }
            *cell = 0;
        }
        if !carry {
            self.next = Some(succ);
        }
        PolicyTable::new(self.horizon, self.num_states, current).ok()
    }
}

/// Result of the exhaustive lexicographic search.
#[derive(Debug, Clone, PartialEq)]
pub struct LexOracle {
    /// Lexicographic maximum under the initial distribution.
    pub best: ValueVector,
    /// Every policy within `eps` of `best` on every level.
    pub witnesses: Vec<PolicyTable>,
    /// Lexicographic maximum from each start state.
    pub best_per_state: Vec<ValueVector>,
}

// Level-by-level argmax filtering over candidate indices.
#[allow(clippy::needless_range_loop)]
fn lex_filter(values: &[ValueVector], levels: usize, eps: f64) -> (ValueVector, Vec<usize>) {
    let mut alive: Vec<usize> = (0..values.len()).collect();
    let mut best = Vec::with_capacity(levels);
    for i in 0..levels {
        let top = alive.iter().map(|&p| values[p][i]).fold(f64::NEG_INFINITY, f64::max);
        alive.retain(|&p| values[p][i] >= top - eps);
        best.push(top);
    }
    (ValueVector(best), alive)
}

/// Exhaustive lexicographic optimum: `Π_0` is every policy and `Π_i` keeps
/// the members of `Π_{i-1}` maximizing level `i` (within `eps`).
pub fn brute_force_lex_optimal(
    instance: &ValidatedInstance,
    rewards: &RewardSpec,
    eps: f64,
    budget: u64,
) -> Result<LexOracle, OracleError> {
    let levels = rewards.num_levels();
    let mut policies = Vec::new();
    let mut per_state = Vec::new();
    for policy in enumerate_policies(instance, budget)? {
        per_state.push(evaluate_state_values(instance, rewards, &policy)?);
        policies.push(policy);
    }
    let at_start: Vec<ValueVector> = per_state
        .iter()
        .map(|v| weight_by(&instance.initial_distribution, v, levels))
        .collect();
    let (best, alive) = lex_filter(&at_start, levels, eps);
    let witnesses = alive.into_iter().map(|p| policies[p].clone()).collect();

    let best_per_state = (0..instance.num_states)
        .map(|s| {
            let from_s: Vec<ValueVector> = per_state.iter().map(|v| v[s].clone()).collect();
            lex_filter(&from_s, levels, eps).0
        })
        .collect();
    Ok(LexOracle { best, witnesses, best_per_state })
}

/// `min_{π ∈ surviving} F^π(rank)`.
pub fn brute_force_min_cdf(
    instance: &ValidatedInstance,
    surviving: &[PolicyTable],
    rank: PreferenceIndex,
) -> Result<f64, OracleError> {
    if surviving.is_empty() {
        return Err(OracleError::EmptySet);
    }
    let mut min = f64::INFINITY;
    for policy in surviving {
        let dist = propagate(instance, policy)?;
        min = min.min(crate::eval::cdf(&dist, rank)?);
    }
    Ok(min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Restrict to quantile maximizers first, then minimize `F(p_i)`.
    QuantileFirst,
    /// Minimize `F(p_i)` directly over the previous policy class.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub ranks: Vec<PreferenceIndex>,
    /// `optimal_cdf[i][r]` is the minimum of `F^π(r)` over the class that
    /// level `i` starts from.
    pub optimal_cdf: Vec<Vec<f64>>,
    pub final_set: Vec<PolicyTable>,
    /// Level values of the first policy in `final_set`: `1 - F(q_i - 1)`, or 0
    /// when `q_i` is the timeout outcome.
    pub final_values: ValueVector,
}

/// Runs the quantile scheme literally over explicit policy sets.
pub fn brute_force_scheme(
    instance: &ValidatedInstance,
    objective: &QuantileObjective,
    scheme: Scheme,
    eps: f64,
    budget: u64,
) -> Result<SchemeResult, OracleError> {
    let n = instance.num_end_states();
    let mut policies = Vec::new();
    let mut cdfs: Vec<Vec<f64>> = Vec::new();
    let mut dists = Vec::new();
    for policy in enumerate_policies(instance, budget)? {
        let dist = propagate(instance, &policy)?;
        let mut acc = 0.0;
        cdfs.push(
            dist.mass
                .iter()
                .map(|m| {
                    acc += m;
                    acc
                })
                .collect(),
        );
        dists.push(dist);
        policies.push(policy);
    }

    let mut alive: Vec<usize> = (0..policies.len()).collect();
    let mut ranks = Vec::with_capacity(objective.len());
    let mut optimal_cdf = Vec::with_capacity(objective.len());
    for &tau in objective.taus() {
        if alive.is_empty() {
            return Err(OracleError::EmptySet);
        }
        let quantiles = alive
            .iter()
            .map(|&p| lower_quantile(&dists[p], tau))
            .collect::<Result<Vec<_>, _>>()?;
        let q_star = *quantiles.iter().max().ok_or(OracleError::EmptySet)?;
        optimal_cdf.push(
            (0..=n)
                .map(|r| alive.iter().map(|&p| cdfs[p][r]).fold(f64::INFINITY, f64::min))
                .collect(),
        );

        let mut pool: Vec<usize> = match scheme {
            Scheme::QuantileFirst => alive
                .iter()
                .zip(&quantiles)
                .filter(|(_, q)| **q == q_star)
                .map(|(p, _)| *p)
                .collect(),
            Scheme::Direct => alive.clone(),
        };
        if !q_star.is_timeout() {
            let below = q_star.0 - 1;
            let min = pool.iter().map(|&p| cdfs[p][below]).fold(f64::INFINITY, f64::min);
            pool.retain(|&p| cdfs[p][below] <= min + eps);
        }
        alive = pool;
        ranks.push(q_star);
    }

    let first = *alive.first().ok_or(OracleError::EmptySet)?;
    let final_values = ValueVector(
        ranks
            .iter()
            .map(|q| if q.is_timeout() { 0.0 } else { 1.0 - cdfs[first][q.0 - 1] })
            .collect(),
    );
    let final_set = alive.into_iter().map(|p| policies[p].clone()).collect();
    Ok(SchemeResult { ranks, optimal_cdf, final_set, final_values })
}

/// `min { r : F*(r) >= tau }` over a vector of optimal CDF values.
pub fn quantile_of_cdf(optimal_cdf: &[f64], tau: f64) -> PreferenceIndex {
    optimal_cdf
        .iter()
        .position(|f| *f >= tau - crate::eval::QUANTILE_SLACK)
        .map_or(PreferenceIndex(optimal_cdf.len() - 1), PreferenceIndex)
}
