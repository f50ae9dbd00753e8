//! Finite-horizon tabular MDP planning under lexicographic reward preference
//! and multi-quantile objectives over ranked end states.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to get
//! `std::error::Error` impls on the error types.
//!
//! Layout:
//! - [`mdp`]: the instance model, validation, preference ranks and
//!   lexicographic comparison of value vectors.
//! - [`eval`]: exact evaluation of a fixed policy (end distribution, CDF,
//!   lower quantiles, expected reward vectors).
//! - [`lex`]: backward induction with nested restricted Bellman backups.
//! - [`quantile`]: indicator reward construction and the bisection that
//!   locates optimal quantiles level by level.
//! - [`oracle`]: exhaustive policy enumeration used to verify the above.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod eval;
pub mod lex;
pub mod mdp;
pub mod oracle;
pub mod quantile;

pub use eval::{
    cdf, evaluate_state_values, evaluate_values, lower_quantile, propagate, EndDistribution,
    EvalError, PolicyTable,
};
pub use lex::{
    filter_argmax, flmdp_solve, marginalize_rewards, restricted_backup, ActionFiltration,
    ActionSet, ExpectedRewards, LexSolution, RewardSpec, SolveError, ValueTensor,
};
pub use mdp::{
    lex_compare, validate, LengthMismatch, MdpInstance, PreferenceIndex, ValidatedInstance,
    ValidationReport, ValueVector, Violation, DEFAULT_EPS,
};
pub use quantile::{
    build_quantile_reward, mqo_solve, probe, Branch, ProbeStep, QuantileError,
    QuantileObjective, QuantileSolveReport,
};
