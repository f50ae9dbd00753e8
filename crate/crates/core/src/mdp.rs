//! Instance model: states, actions, horizon, transition tensor, ranked end
//! states and the initial distribution.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Deref;

/// Absolute tolerance used for lexicographic comparison and argmax filtering.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Tolerance on row sums and on the initial distribution.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite-horizon MDP with a ranked set of absorbing end states.
///
/// Decisions are taken at epochs `0..horizon`; the state at `horizon` decides
/// the outcome. Mass that is not on an end state at the horizon counts as the
/// virtual timeout outcome, which is ranked below every end state and does
/// not occupy a state index.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Dense `P(s, a, s')`, row-major over `(s, a, s')`.
    pub transitions: Vec<f64>,
    /// End states in strictly increasing preference.
    pub end_states: Vec<usize>,
    pub initial_distribution: Vec<f64>,
}

impl MdpInstance {
    /// An instance with every transition probability set to zero.
    pub fn zeroed(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        MdpInstance {
            num_states,
            num_actions,
            horizon,
            transitions: vec![0.0; num_states * num_actions * num_states],
            end_states: Vec::new(),
            initial_distribution: vec![0.0; num_states],
        }
    }

    #[inline]
    pub fn index(&self, state: usize, action: usize, next: usize) -> usize {
        (state * self.num_actions + action) * self.num_states + next
    }

    pub fn set(&mut self, state: usize, action: usize, next: usize, p: f64) {
        let i = self.index(state, action, next);
        self.transitions[i] = p;
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[self.index(state, action, next)]
    }
}

/// One broken instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyStateSpace,
    EmptyActionSpace,
    ZeroHorizon,
    TransitionShape { expected: usize, found: usize },
    InitialShape { expected: usize, found: usize },
    NonFiniteProbability { state: usize, action: usize, next: usize },
    ProbabilityOutOfRange { state: usize, action: usize, next: usize, p: f64 },
    RowNotStochastic { state: usize, action: usize, sum: f64 },
    IndexOutOfRange { index: usize, num_states: usize },
    DuplicateEndState { state: usize },
    EndStateNotAbsorbing { state: usize, action: usize },
    NonFiniteInitial { state: usize },
    InitialOutOfRange { state: usize, p: f64 },
    BadInitialDistribution { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyStateSpace => write!(f, "instance has no states"),
            Violation::EmptyActionSpace => write!(f, "instance has no actions"),
            Violation::ZeroHorizon => write!(f, "horizon must be at least 1"),
            Violation::TransitionShape { expected, found } => {
                write!(f, "transition tensor has {found} entries, expected {expected}")
            }
            Violation::InitialShape { expected, found } => {
                write!(f, "initial distribution has {found} entries, expected {expected}")
            }
            Violation::NonFiniteProbability { state, action, next } => {
                write!(f, "NonFiniteProbability: P({state},{action},{next}) is not finite")
            }
            Violation::ProbabilityOutOfRange { state, action, next, p } => {
                write!(f, "ProbabilityOutOfRange: P({state},{action},{next}) = {p}")
            }
            Violation::RowNotStochastic { state, action, sum } => {
                write!(f, "RowNotStochastic: row (s={state}, a={action}) sums to {sum}")
            }
            Violation::IndexOutOfRange { index, num_states } => {
                write!(f, "IndexOutOfRange: end state {index} not below {num_states}")
            }
            Violation::DuplicateEndState { state } => {
                write!(f, "DuplicateEndState: state {state} listed more than once")
            }
            Violation::EndStateNotAbsorbing { state, action } => {
                write!(f, "EndStateNotAbsorbing: end state {state} leaves under action {action}")
            }
            Violation::NonFiniteInitial { state } => {
                write!(f, "NonFiniteProbability: initial mass of state {state} is not finite")
            }
            Violation::InitialOutOfRange { state, p } => {
                write!(f, "BadInitialDistribution: initial mass of state {state} is {p}")
            }
            Violation::BadInitialDistribution { sum } => {
                write!(f, "BadInitialDistribution: initial distribution sums to {sum}")
            }
        }
    }
}

/// Every invariant violation found in a candidate instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ValidationReport {}

/// An instance that passed [`validate`]. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedInstance {
    inner: MdpInstance,
    // 0 for ordinary states, k for the k-th end state.
    rank_of: Vec<usize>,
}

impl ValidatedInstance {
    pub fn instance(&self) -> &MdpInstance {
        &self.inner
    }

    pub fn into_inner(self) -> MdpInstance {
        self.inner
    }

    /// Number of modeled end states `n`. Ranks run over `0..=n`.
    pub fn num_end_states(&self) -> usize {
        self.inner.end_states.len()
    }

    pub fn is_end(&self, state: usize) -> bool {
        self.rank_of[state] != 0
    }

    /// Preference rank of `state` if it is an end state.
    pub fn end_rank(&self, state: usize) -> Option<PreferenceIndex> {
        match self.rank_of[state] {
            0 => None,
            k => Some(PreferenceIndex(k)),
        }
    }

    /// State index of the end state with rank `k ≥ 1`.
    pub fn end_state(&self, rank: PreferenceIndex) -> Option<usize> {
        rank.0
            .checked_sub(1)
            .and_then(|i| self.inner.end_states.get(i).copied())
    }

    /// The outgoing distribution `P(s, a, ·)`.
    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = self.inner.index(state, action, 0);
        &self.inner.transitions[start..start + self.inner.num_states]
    }
}

impl Deref for ValidatedInstance {
    type Target = MdpInstance;

    fn deref(&self) -> &MdpInstance {
        &self.inner
    }
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate(instance: MdpInstance) -> Result<ValidatedInstance, ValidationReport> {
    let mut violations = Vec::new();
    let ns = instance.num_states;
    let na = instance.num_actions;

    if ns == 0 {
        violations.push(Violation::EmptyStateSpace);
    }
    if na == 0 {
        violations.push(Violation::EmptyActionSpace);
    }
    if instance.horizon == 0 {
        violations.push(Violation::ZeroHorizon);
    }
    let expected = ns * na * ns;
    if instance.transitions.len() != expected {
        violations.push(Violation::TransitionShape {
            expected,
            found: instance.transitions.len(),
        });
    }
    if instance.initial_distribution.len() != ns {
        violations.push(Violation::InitialShape {
            expected: ns,
            found: instance.initial_distribution.len(),
        });
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }

    for s in 0..ns {
        for a in 0..na {
            let mut finite = true;
            let mut sum = 0.0;
            for next in 0..ns {
                let p = instance.prob(s, a, next);
                if !p.is_finite() {
                    finite = false;
                    violations.push(Violation::NonFiniteProbability { state: s, action: a, next });
                    continue;
                }
                if !(0.0..=1.0).contains(&p) {
                    violations.push(Violation::ProbabilityOutOfRange {
                        state: s,
                        action: a,
                        next,
                        p,
                    });
                }
                sum += p;
            }
            if finite && (sum - 1.0).abs() > STOCHASTIC_TOL {
                violations.push(Violation::RowNotStochastic { state: s, action: a, sum });
            }
        }
    }

    let mut rank_of = vec![0usize; ns];
    for (i, &e) in instance.end_states.iter().enumerate() {
        if e >= ns {
            violations.push(Violation::IndexOutOfRange { index: e, num_states: ns });
            continue;
        }
        if rank_of[e] != 0 {
            violations.push(Violation::DuplicateEndState { state: e });
            continue;
        }
        rank_of[e] = i + 1;
        for a in 0..na {
            if instance.prob(e, a, e) != 1.0 {
                violations.push(Violation::EndStateNotAbsorbing { state: e, action: a });
            }
        }
    }

    let mut finite = true;
    let mut sum = 0.0;
    for (s, &p) in instance.initial_distribution.iter().enumerate() {
        if !p.is_finite() {
            finite = false;
            violations.push(Violation::NonFiniteInitial { state: s });
            continue;
        }
        if !(0.0..=1.0).contains(&p) {
            violations.push(Violation::InitialOutOfRange { state: s, p });
        }
        sum += p;
    }
    if finite && (sum - 1.0).abs() > STOCHASTIC_TOL {
        violations.push(Violation::BadInitialDistribution { sum });
    }

    if violations.is_empty() {
        Ok(ValidatedInstance { inner: instance, rank_of })
    } else {
        Err(ValidationReport { violations })
    }
}

/// Position in the outcome preference order: 0 is the timeout outcome, `k ≥ 1`
/// is the k-th end state. Larger is preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PreferenceIndex(pub usize);

impl PreferenceIndex {
    pub const TIMEOUT: PreferenceIndex = PreferenceIndex(0);

    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_timeout(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for PreferenceIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("g0"),
            k => write!(f, "e{k}"),
        }
    }
}

/// Per-level values, highest priority first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueVector(pub Vec<f64>);

impl Deref for ValueVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueVector {
    fn from(values: Vec<f64>) -> Self {
        ValueVector(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

impl fmt::Display for LengthMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "value vectors differ in length ({} vs {})", self.left, self.right)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LengthMismatch {}

/// Lexicographic comparison: the first component differing by more than
/// `eps` decides.
pub fn lex_compare(u: &[f64], v: &[f64], eps: f64) -> Result<Ordering, LengthMismatch> {
    if u.len() != v.len() {
        return Err(LengthMismatch { left: u.len(), right: v.len() });
    }
    for (a, b) in u.iter().zip(v) {
        if (a - b).abs() > eps {
            return Ok(if a > b { Ordering::Greater } else { Ordering::Less });
        }
    }
    Ok(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state() -> MdpInstance {
        let mut m = MdpInstance::zeroed(2, 1, 1);
        m.set(0, 0, 0, 0.5);
        m.set(0, 0, 1, 0.5);
        m.set(1, 0, 1, 1.0);
        m.end_states = vec![1];
        m.initial_distribution = vec![1.0, 0.0];
        m
    }

    #[test]
    fn accepts_two_state_instance() {
        let v = validate(two_state()).unwrap();
        assert_eq!(v.end_rank(1), Some(PreferenceIndex(1)));
        assert_eq!(v.end_rank(0), None);
        assert_eq!(v.end_state(PreferenceIndex(1)), Some(1));
        assert_eq!(v.end_state(PreferenceIndex::TIMEOUT), None);
    }

    #[test]
    fn rejects_short_row() {
        let mut m = two_state();
        m.set(0, 0, 1, 0.4);
        let err = validate(m).unwrap_err();
        assert_eq!(err.violations.len(), 1);
        match err.violations[0] {
            Violation::RowNotStochastic { state: 0, action: 0, sum } => {
                assert!((sum - 0.9).abs() < 1e-15)
            }
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_leaky_end_state() {
        let mut m = two_state();
        m.set(1, 0, 1, 0.0);
        m.set(1, 0, 0, 1.0);
        let err = validate(m).unwrap_err();
        assert_eq!(err.violations, vec![Violation::EndStateNotAbsorbing { state: 1, action: 0 }]);
    }

    #[test]
    fn reports_every_violation() {
        let mut m = two_state();
        m.horizon = 1;
        m.set(0, 0, 0, f64::NAN);
        m.end_states = vec![1, 1, 7];
        m.initial_distribution = vec![0.5, 0.4];
        let err = validate(m).unwrap_err();
        assert!(err
            .violations
            .contains(&Violation::NonFiniteProbability { state: 0, action: 0, next: 0 }));
        assert!(err.violations.contains(&Violation::DuplicateEndState { state: 1 }));
        assert!(err
            .violations
            .contains(&Violation::IndexOutOfRange { index: 7, num_states: 2 }));
        assert!(err
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BadInitialDistribution { .. })));
    }

    #[test]
    fn rejects_shape_and_horizon() {
        let mut m = two_state();
        m.horizon = 0;
        m.transitions.pop();
        let err = validate(m).unwrap_err();
        assert!(err.violations.contains(&Violation::ZeroHorizon));
        assert!(err
            .violations
            .contains(&Violation::TransitionShape { expected: 4, found: 3 }));
    }

    #[test]
    fn lex_compare_examples() {
        let eps = 1e-9;
        assert_eq!(lex_compare(&[0.5, 0.1], &[0.5, 0.3], eps), Ok(Ordering::Less));
        assert_eq!(lex_compare(&[0.5, 0.1], &[0.5, 0.1], eps), Ok(Ordering::Equal));
        assert_eq!(lex_compare(&[0.5 + 1e-12, 0.0], &[0.5, 0.9], eps), Ok(Ordering::Less));
        assert_eq!(
            lex_compare(&[0.5], &[0.5, 0.1], eps),
            Err(LengthMismatch { left: 1, right: 2 })
        );
    }

    // Independent re-check of each invariant, used to test that validate is
    // sound and complete.
    fn recheck(m: &MdpInstance) -> bool {
        let ns = m.num_states;
        let na = m.num_actions;
        if ns == 0 || na == 0 || m.horizon == 0 {
            return false;
        }
        if m.transitions.len() != ns * na * ns || m.initial_distribution.len() != ns {
            return false;
        }
        let rows_ok = m.transitions.chunks(ns).all(|row| {
            row.iter().all(|p| p.is_finite() && *p >= 0.0 && *p <= 1.0)
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        });
        let mut seen = alloc::collections::BTreeSet::new();
        let ends_ok = m.end_states.iter().all(|&e| {
            e < ns && seen.insert(e) && (0..na).all(|a| m.transitions[(e * na + a) * ns + e] == 1.0)
        });
        let mu = &m.initial_distribution;
        let mu_ok = mu.iter().all(|p| p.is_finite() && *p >= 0.0 && *p <= 1.0)
            && (mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        rows_ok && ends_ok && mu_ok
    }

    fn candidate() -> impl Strategy<Value = MdpInstance> {
        (1usize..4, 1usize..3, 0usize..3).prop_flat_map(|(ns, na, horizon)| {
            let cells = prop::sample::select(vec![0.0, 0.25, 0.5, 1.0, -0.5, f64::NAN]);
            (
                prop::collection::vec(cells.clone(), ns * na * ns),
                prop::collection::vec(0usize..ns + 1, 0..3),
                prop::collection::vec(cells, ns),
            )
                .prop_map(move |(transitions, end_states, initial_distribution)| MdpInstance {
                    num_states: ns,
                    num_actions: na,
                    horizon,
                    transitions,
                    end_states,
                    initial_distribution,
                })
        })
    }

    proptest! {
        #[test]
        fn validate_matches_recheck(m in candidate()) {
            prop_assert_eq!(validate(m.clone()).is_ok(), recheck(&m));
        }

        #[test]
        fn end_states_stay_put(m in candidate()) {
            if let Ok(v) = validate(m) {
                for &e in &v.end_states {
                    for a in 0..v.num_actions {
                        let row = v.row(e, a);
                        prop_assert_eq!(row[e], 1.0);
                        prop_assert!(row.iter().enumerate().all(|(j, p)| j == e || *p == 0.0));
                    }
                }
            }
        }

        #[test]
        fn lex_compare_is_total_order(
            u in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 3),
            v in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 3),
            w in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 3),
            eps in 0.0f64..1e-6,
        ) {
            prop_assert_eq!(lex_compare(&u, &u, eps), Ok(Ordering::Equal));
            let uv = lex_compare(&u, &v, 0.0).unwrap();
            let vu = lex_compare(&v, &u, 0.0).unwrap();
            prop_assert_eq!(uv, vu.reverse());
            let vw = lex_compare(&v, &w, 0.0).unwrap();
            if uv != Ordering::Greater && vw != Ordering::Greater {
                prop_assert_ne!(lex_compare(&u, &w, 0.0).unwrap(), Ordering::Greater);
            }
            if uv == Ordering::Equal {
                prop_assert_eq!(&u, &v);
            }
        }
    }
}
