//! Multi-quantile objectives reduced to lexicographic reward levels.
//!
//! An indicator reward that pays 1 on entering any end state ranked at least
//! `r` has expected total `1 - F(r - 1)`, so maximizing it minimizes the CDF
//! just below `r`. The optimal quantile of each level is found by bisection
//! over ranks, where every probe is a lexicographic solve with the already
//! locked levels on top.

use alloc::vec::Vec;
use core::fmt;

use crate::eval::PolicyTable;
use crate::lex::{flmdp_solve, RewardSpec, SolveError, ValueTensor};
use crate::mdp::{PreferenceIndex, ValidatedInstance, ValueVector};

/// Slack on the closed test `F*(m) >= tau` inside the bisection.
pub const PROBE_SLACK: f64 = 1e-12;

/// Tolerance of the consistency checks run on every probe.
const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum QuantileError {
    EmptyObjective,
    TauOutOfRange { index: usize, tau: f64 },
    TausNotIncreasing { index: usize },
    RankOutOfRange { rank: usize, max: usize },
    Solve(SolveError),
    InvariantViolation { level: usize, detail: &'static str, value: f64 },
}

impl fmt::Display for QuantileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileError::EmptyObjective => write!(f, "objective has no taus"),
            QuantileError::TauOutOfRange { index, tau } => {
                write!(f, "tau[{index}] = {tau} outside (0, 1]")
            }
            QuantileError::TausNotIncreasing { index } => {
                write!(f, "taus must be strictly increasing (tau[{index}])")
            }
            QuantileError::RankOutOfRange { rank, max } => {
                write!(f, "quantile threshold rank {rank} outside 1..={max}")
            }
            QuantileError::Solve(e) => write!(f, "{e}"),
            QuantileError::InvariantViolation { level, detail, value } => {
                write!(f, "bisection invariant violated at level {level}: {detail} ({value})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QuantileError {}

impl From<SolveError> for QuantileError {
    fn from(e: SolveError) -> Self {
        QuantileError::Solve(e)
    }
}

/// Strictly increasing quantile levels `τ_1 < … < τ_L`, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileObjective {
    taus: Vec<f64>,
}

impl QuantileObjective {
    pub fn new(taus: Vec<f64>) -> Result<Self, QuantileError> {
        if taus.is_empty() {
            return Err(QuantileError::EmptyObjective);
        }
        for (index, &tau) in taus.iter().enumerate() {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(QuantileError::TauOutOfRange { index, tau });
            }
            if index > 0 && taus[index - 1] >= tau {
                return Err(QuantileError::TausNotIncreasing { index });
            }
        }
        Ok(QuantileObjective { taus })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Which bound a probe moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `F*(m) >= τ`: the upper bound moved to `m`.
    Upper,
    /// `F*(m) < τ`: the lower bound moved to `m`.
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStep {
    /// Rank `m` whose optimal CDF value was measured.
    pub cdf_rank: PreferenceIndex,
    /// Reward threshold used for the probe, `m + 1`.
    pub candidate: PreferenceIndex,
    pub probe_value: f64,
    /// `1 - probe_value`.
    pub cdf_star: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSolveReport {
    pub optimal_ranks: Vec<PreferenceIndex>,
    pub final_policy: PolicyTable,
    pub final_values: ValueVector,
    pub final_value_tensor: ValueTensor,
    /// Reward levels locked at the optimal ranks.
    pub final_rewards: RewardSpec,
    pub probe_trace: Vec<Vec<ProbeStep>>,
    pub probe_count: Vec<usize>,
}

/// Upper bound on probes per level for `n` end states:
/// `ceil(log2(n + 1)) + 1`.
pub fn probe_budget(num_end_states: usize) -> usize {
    let outcomes = num_end_states + 1;
    let mut bits = 0;
    while (1usize << bits) < outcomes {
        bits += 1;
    }
    bits + 1
}

/// Indicator reward: 1 on a step from an ordinary state into an end state of
/// rank at least `rank`, 0 otherwise.
pub fn build_quantile_reward(
    instance: &ValidatedInstance,
    rank: PreferenceIndex,
) -> Result<Vec<f64>, QuantileError> {
    let n = instance.num_end_states();
    if rank.0 == 0 || rank.0 > n {
        return Err(QuantileError::RankOutOfRange { rank: rank.0, max: n });
    }
    let mut level = RewardSpec::zero_level(instance);
    for s in (0..instance.num_states).filter(|&s| !instance.is_end(s)) {
        for a in 0..instance.num_actions {
            for &e in &instance.end_states[rank.0 - 1..] {
                level[instance.index(s, a, e)] = 1.0;
            }
        }
    }
    Ok(level)
}

/// Reward level that locks an optimal quantile. Every outcome is at least the
/// timeout, so a timeout quantile constrains nothing and locks the zero reward.
pub fn locked_reward(
    instance: &ValidatedInstance,
    rank: PreferenceIndex,
) -> Result<Vec<f64>, QuantileError> {
    if rank.is_timeout() {
        Ok(RewardSpec::zero_level(instance))
    } else {
        build_quantile_reward(instance, rank)
    }
}

fn locked_spec(
    instance: &ValidatedInstance,
    locked: &[PreferenceIndex],
    candidate: Option<PreferenceIndex>,
) -> Result<RewardSpec, QuantileError> {
    let mut levels = Vec::with_capacity(locked.len() + 1);
    for &rank in locked {
        levels.push(locked_reward(instance, rank)?);
    }
    if let Some(candidate) = candidate {
        levels.push(build_quantile_reward(instance, candidate)?);
    }
    Ok(RewardSpec::new(instance, levels)?)
}

/// Best achievable probability of ending at rank `candidate` or better, among
/// policies that are lexicographically optimal for the locked levels.
pub fn probe(
    instance: &ValidatedInstance,
    locked: &[PreferenceIndex],
    candidate: PreferenceIndex,
    eps: f64,
) -> Result<f64, QuantileError> {
    let spec = locked_spec(instance, locked, Some(candidate))?;
    let sol = flmdp_solve(instance, &spec, eps)?;
    Ok(sol.value_at_start(instance)[locked.len()])
}

/// Locates the optimal lower quantile of every level by bisection and returns
/// the lexicographically optimal policy for the locked reward vector.
///
/// Level `k` keeps `lo < hi` with `F*(lo) < τ_k <= F*(hi)`, where `F*` is the
/// smallest CDF reachable by policies optimal for the levels above. `lo`
/// starts just below the previous level's quantile (or at a virtual `-1`
/// with `F* = 0`) and `hi` at the top rank, where `F* = 1`.
pub fn mqo_solve(
    instance: &ValidatedInstance,
    objective: &QuantileObjective,
    eps: f64,
) -> Result<QuantileSolveReport, QuantileError> {
    let n = instance.num_end_states() as isize;
    let mut optimal_ranks: Vec<PreferenceIndex> = Vec::with_capacity(objective.len());
    let mut probe_trace = Vec::with_capacity(objective.len());
    let mut probe_count = Vec::with_capacity(objective.len());

    for (level, &tau) in objective.taus().iter().enumerate() {
        let mut lo: isize = optimal_ranks.last().map_or(-1, |r| r.0 as isize - 1);
        let mut hi: isize = n;
        // Known CDF values at the current bounds; the initial lower bound of a
        // later level is only known to sit below tau.
        let mut lo_cdf = if lo < 0 { Some(0.0) } else { None };
        let mut hi_cdf = 1.0;
        let mut steps = Vec::new();

        while hi - lo > 1 {
            let m = (lo + hi + 1).div_euclid(2);
            let candidate = PreferenceIndex(m as usize + 1);
            let value = probe(instance, &optimal_ranks, candidate, eps)?;
            if !(-INVARIANT_TOL..=1.0 + INVARIANT_TOL).contains(&value) {
                return Err(QuantileError::InvariantViolation {
                    level,
                    detail: "probe value is not a probability",
                    value,
                });
            }
            let cdf_star = 1.0 - value;
            if cdf_star > hi_cdf + INVARIANT_TOL
                || lo_cdf.is_some_and(|l| cdf_star < l - INVARIANT_TOL)
            {
                return Err(QuantileError::InvariantViolation {
                    level,
                    detail: "optimal CDF is not monotone in rank",
                    value: cdf_star,
                });
            }
            let branch = if cdf_star >= tau - PROBE_SLACK {
                hi = m;
                hi_cdf = cdf_star;
                Branch::Upper
            } else {
                lo = m;
                lo_cdf = Some(cdf_star);
                Branch::Lower
            };
            steps.push(ProbeStep {
                cdf_rank: PreferenceIndex(m as usize),
                candidate,
                probe_value: value,
                cdf_star,
                branch,
            });
        }

        let rank = PreferenceIndex(hi as usize);
        if optimal_ranks.last().is_some_and(|prev| *prev > rank) {
            return Err(QuantileError::InvariantViolation {
                level,
                detail: "optimal quantiles decreased",
                value: hi as f64,
            });
        }
        optimal_ranks.push(rank);
        probe_count.push(steps.len());
        probe_trace.push(steps);
    }

    let final_rewards = locked_spec(instance, &optimal_ranks, None)?;
    let sol = flmdp_solve(instance, &final_rewards, eps)?;
    let final_values = sol.value_at_start(instance);
    Ok(QuantileSolveReport {
        optimal_ranks,
        final_policy: sol.policy,
        final_values,
        final_value_tensor: sol.values,
        final_rewards,
        probe_trace,
        probe_count,
    })
}
