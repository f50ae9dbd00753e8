//! TOML instance documents.
//!
//! Transitions and rewards are sparse `[s, a, s', value]` entries; omitted
//! entries are zero. The canonical form emitted by [`emit_instance`] sorts
//! keys alphabetically, sorts entries by `(s, a, s')`, drops zero entries and
//! prints floats with the shortest representation that parses back exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lexiplan_core::mdp::{validate, MdpInstance, PreferenceIndex, ValidatedInstance, Violation};
use lexiplan_core::{EvalError, PolicyTable, QuantileError, QuantileObjective, RewardSpec, SolveError, ValidationReport};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("line {line}: DuplicateEntry ({state},{action},{next}) in `{key}`")]
    DuplicateEntry { key: String, line: usize, state: usize, action: usize, next: usize },
    #[error("line {line}: entry ({state},{action},{next}) in `{key}` is out of range")]
    EntryOutOfRange { key: String, line: usize, state: usize, action: usize, next: usize },
    #[error("ValidationFailed: {}", describe_report(.report, .context))]
    Validation { report: ValidationReport, context: Vec<String> },
    #[error("line {line}: `rewards`: {source}")]
    Rewards { line: usize, source: SolveError },
    #[error("line {line}: `objective`: {source}")]
    Objective { line: usize, source: QuantileError },
    #[error("`policy`: {0}")]
    Policy(String),
    #[error("`policy`: {0}")]
    PolicyShape(EvalError),
}

impl DocumentError {
    /// True for errors in the text itself, as opposed to a well-formed
    /// document describing an invalid model.
    pub fn is_syntax(&self) -> bool {
        matches!(
            self,
            DocumentError::Syntax(_) | DocumentError::DuplicateEntry { .. } | DocumentError::Policy(_)
        )
    }
}

fn describe_report(report: &ValidationReport, context: &[String]) -> String {
    let mut out = format!("{} violation(s)", report.violations.len());
    for (v, c) in report.violations.iter().zip(context) {
        let _ = write!(out, "\n  {c}: {v}");
    }
    out
}

/// A parsed instance plus the optional extras a document may carry.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDocument {
    pub name: String,
    pub instance: ValidatedInstance,
    pub end_state_names: Option<Vec<String>>,
    pub rewards: Option<RewardSpec>,
    pub objective: Option<QuantileObjective>,
}

impl InstanceDocument {
    /// Display label of an outcome rank: `g0 (timeout)` or `e<k> (<name>)`.
    pub fn outcome_label(&self, rank: PreferenceIndex) -> String {
        if rank.is_timeout() {
            return "g0 (timeout)".to_string();
        }
        let name = self
            .end_state_names
            .as_ref()
            .and_then(|names| names.get(rank.0 - 1).cloned())
            .unwrap_or_else(|| format!("state {}", self.instance.end_states[rank.0 - 1]));
        format!("{rank} ({name})")
    }

    /// Labels of every outcome rank `0..=n`.
    pub fn outcome_labels(&self) -> Vec<String> {
        (0..=self.instance.num_end_states())
            .map(|k| self.outcome_label(PreferenceIndex(k)))
            .collect()
    }
}

type Entry = (usize, usize, usize, f64);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    name: Option<String>,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    end_states: Vec<usize>,
    end_state_names: Option<Vec<String>>,
    initial_distribution: Vec<f64>,
    transitions: Vec<Spanned<Entry>>,
    rewards: Option<Vec<Vec<Spanned<Entry>>>>,
    objective: Option<Vec<f64>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn key_of(v: &Violation) -> &'static str {
    match v {
        Violation::EmptyStateSpace => "num_states",
        Violation::EmptyActionSpace => "num_actions",
        Violation::ZeroHorizon => "horizon",
        Violation::TransitionShape { .. }
        | Violation::NonFiniteProbability { .. }
        | Violation::ProbabilityOutOfRange { .. }
        | Violation::RowNotStochastic { .. } => "transitions",
        Violation::IndexOutOfRange { .. }
        | Violation::DuplicateEndState { .. }
        | Violation::EndStateNotAbsorbing { .. } => "end_states",
        Violation::InitialShape { .. }
        | Violation::NonFiniteInitial { .. }
        | Violation::InitialOutOfRange { .. }
        | Violation::BadInitialDistribution { .. } => "initial_distribution",
    }
}

// Scatters sparse entries into a dense (s, a, s') tensor.
fn densify(
    text: &str,
    key: &str,
    entries: &[Spanned<Entry>],
    ns: usize,
    na: usize,
) -> Result<Vec<f64>, DocumentError> {
    let mut dense = vec![0.0; ns * na * ns];
    let mut seen = BTreeMap::new();
    for entry in entries {
        let (state, action, next, value) = *entry.get_ref();
        let line = line_of(text, entry.span().start);
        if state >= ns || action >= na || next >= ns {
            return Err(DocumentError::EntryOutOfRange { key: key.to_string(), line, state, action, next });
        }
        if seen.insert((state, action, next), line).is_some() {
            return Err(DocumentError::DuplicateEntry { key: key.to_string(), line, state, action, next });
        }
        dense[(state * na + action) * ns + next] = value;
    }
    Ok(dense)
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<InstanceDocument, DocumentError> {
    let raw: RawDocument = toml::from_str(text).map_err(|e| DocumentError::Syntax(e.to_string()))?;
    let ns = raw.num_states;
    let na = raw.num_actions;
    let transitions = densify(text, "transitions", &raw.transitions, ns, na)?;
    let rewards = match &raw.rewards {
        Some(levels) => Some(
            levels
                .iter()
                .map(|level| densify(text, "rewards", level, ns, na))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };

    let instance = MdpInstance {
        num_states: ns,
        num_actions: na,
        horizon: raw.horizon,
        transitions,
        end_states: raw.end_states,
        initial_distribution: raw.initial_distribution,
    };
    let instance = validate(instance).map_err(|report| {
        let context = report
            .violations
            .iter()
            .map(|v| {
                let key = key_of(v);
                format!("line {} `{key}`", key_line(text, key))
            })
            .collect();
        DocumentError::Validation { report, context }
    })?;

    if let Some(names) = &raw.end_state_names {
        if names.len() != instance.num_end_states() {
            return Err(DocumentError::Syntax(format!(
                "line {}: `end_state_names` has {} names for {} end states",
                key_line(text, "end_state_names"),
                names.len(),
                instance.num_end_states()
            )));
        }
    }
    let rewards = rewards
        .map(|levels| RewardSpec::new(&instance, levels))
        .transpose()
        .map_err(|source| DocumentError::Rewards { line: key_line(text, "rewards"), source })?;
    let objective = raw
        .objective
        .map(QuantileObjective::new)
        .transpose()
        .map_err(|source| DocumentError::Objective { line: key_line(text, "objective"), source })?;

    Ok(InstanceDocument {
        name: raw.name.unwrap_or_default(),
        instance,
        end_state_names: raw.end_state_names,
        rewards,
        objective,
    })
}

/// Float formatting shared by every emitted document: shortest
/// representation that round-trips, always recognizable as a TOML float.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:?}")
    }
}

pub fn fmt_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn fmt_list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    let parts: Vec<String> = items.iter().map(f).collect();
    format!("[{}]", parts.join(", "))
}

fn emit_entries(out: &mut String, indent: &str, dense: &[f64], ns: usize, na: usize) {
    for s in 0..ns {
        for a in 0..na {
            for next in 0..ns {
                let v = dense[(s * na + a) * ns + next];
                if v != 0.0 {
                    let _ = writeln!(out, "{indent}[{s}, {a}, {next}, {}],", fmt_float(v));
                }
            }
        }
    }
}

/// Canonical text of a document.
pub fn emit_instance(doc: &InstanceDocument) -> String {
    let inst = &doc.instance;
    let ns = inst.num_states;
    let na = inst.num_actions;
    let mut out = String::new();
    if let Some(names) = &doc.end_state_names {
        let _ = writeln!(out, "end_state_names = {}", fmt_list(names, |n| fmt_string(n)));
    }
    let _ = writeln!(out, "end_states = {}", fmt_list(&inst.end_states, |e| e.to_string()));
    let _ = writeln!(out, "horizon = {}", inst.horizon);
    let _ = writeln!(
        out,
        "initial_distribution = {}",
        fmt_list(&inst.initial_distribution, |p| fmt_float(*p))
    );
    let _ = writeln!(out, "name = {}", fmt_string(&doc.name));
    let _ = writeln!(out, "num_actions = {na}");
    let _ = writeln!(out, "num_states = {ns}");
    if let Some(obj) = &doc.objective {
        let _ = writeln!(out, "objective = {}", fmt_list(obj.taus(), |t| fmt_float(*t)));
    }
    if let Some(rewards) = &doc.rewards {
        out.push_str("rewards = [\n");
        for level in rewards.levels() {
            out.push_str("  [\n");
            emit_entries(&mut out, "    ", level, ns, na);
            out.push_str("  ],\n");
        }
        out.push_str("]\n");
    }
    out.push_str("transitions = [\n");
    emit_entries(&mut out, "  ", &inst.transitions, ns, na);
    out.push_str("]\n");
    out
}

#[derive(Deserialize)]
struct RawPolicy {
    policy: Vec<Vec<usize>>,
}

/// Reads the `policy` key (one row of actions per epoch) from any TOML
/// document, including emitted solve reports.
pub fn parse_policy(text: &str, instance: &ValidatedInstance) -> Result<PolicyTable, DocumentError> {
    let raw: RawPolicy = toml::from_str(text).map_err(|e| DocumentError::Policy(e.to_string()))?;
    if let Some((t, row)) = raw.policy.iter().enumerate().find(|(_, r)| r.len() != instance.num_states) {
        return Err(DocumentError::Policy(format!(
            "row {t} has {} actions, expected {}",
            row.len(),
            instance.num_states
        )));
    }
    let horizon = raw.policy.len();
    let policy = PolicyTable::new(horizon, instance.num_states, raw.policy.concat())
        .map_err(DocumentError::PolicyShape)?;
    policy.check(instance).map_err(DocumentError::PolicyShape)?;
    Ok(policy)
}

/// `policy = [...]` block, one epoch per line.
pub fn emit_policy(policy: &PolicyTable) -> String {
    let mut out = String::from("policy = [\n");
    for t in 0..policy.horizon() {
        let _ = writeln!(out, "  {},", fmt_list(policy.epoch(t), |a| a.to_string()));
    }
    out.push_str("]\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const TWO_STATE: &str = r#"
name = "two_state"
num_states = 2
num_actions = 1
horizon = 1
end_states = [1]
initial_distribution = [1.0, 0.0]
transitions = [
  [0, 0, 0, 0.5],
  [0, 0, 1, 0.5],
  [1, 0, 1, 1],
]
"#;

    #[test]
    fn parses_minimal_document() {
        let doc = parse_instance(TWO_STATE).unwrap();
        let mut m = MdpInstance::zeroed(2, 1, 1);
        m.set(0, 0, 0, 0.5);
        m.set(0, 0, 1, 0.5);
        m.set(1, 0, 1, 1.0);
        m.end_states = vec![1];
        m.initial_distribution = vec![1.0, 0.0];
        assert_eq!(doc.instance.instance(), &m);
        assert_eq!(doc.name, "two_state");
        assert!(doc.rewards.is_none() && doc.objective.is_none());
    }

    #[test]
    fn rejects_duplicate_entries() {
        let text = TWO_STATE.replace("[1, 0, 1, 1],", "[1, 0, 1, 1],\n  [0, 0, 1, 0.5],");
        match parse_instance(&text).unwrap_err() {
            DocumentError::DuplicateEntry { state: 0, action: 0, next: 1, line, .. } => {
                assert_eq!(line, 12)
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn validation_carries_key_context() {
        let text = TWO_STATE.replace("[0, 0, 1, 0.5]", "[0, 0, 1, 0.4]");
        let err = parse_instance(&text).unwrap_err();
        assert!(!err.is_syntax());
        let msg = err.to_string();
        assert!(msg.contains("line 8 `transitions`"), "{msg}");
        assert!(msg.contains("RowNotStochastic"), "{msg}");
    }

    #[test]
    fn syntax_errors_are_reported() {
        let err = parse_instance("num_states = ").unwrap_err();
        assert!(err.is_syntax());
        let err = parse_instance(&TWO_STATE.replace("horizon = 1", "horizon = 1\nbogus = 3")).unwrap_err();
        assert!(err.is_syntax());
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let doc = parse_instance(TWO_STATE).unwrap();
        let once = emit_instance(&doc);
        let again = emit_instance(&parse_instance(&once).unwrap());
        assert_eq!(once, again);
        assert!(once.starts_with("end_states = [1]\nhorizon = 1\n"));
        assert!(once.contains("  [1, 0, 1, 1.0],\n"));
    }

    #[test]
    fn rewards_and_objective() {
        let text = format!("{TWO_STATE}rewards = [[[0, 0, 1, 1.0]], []]\nobjective = [0.25, 0.5]\n");
        let doc = parse_instance(&text).unwrap();
        assert_eq!(doc.rewards.as_ref().unwrap().num_levels(), 2);
        assert_eq!(doc.objective.as_ref().unwrap().taus(), &[0.25, 0.5]);
        let back = parse_instance(&emit_instance(&doc)).unwrap();
        assert_eq!(back, doc);

        let bad = format!("{TWO_STATE}rewards = [[[1, 0, 1, 1.0]]]\n");
        assert!(matches!(
            parse_instance(&bad).unwrap_err(),
            DocumentError::Rewards { source: SolveError::NonZeroEndReward { .. }, .. }
        ));
        let bad = format!("{TWO_STATE}objective = [0.5, 0.5]\n");
        assert!(matches!(parse_instance(&bad).unwrap_err(), DocumentError::Objective { .. }));
    }

    #[test]
    fn policy_round_trip() {
        let doc = parse_instance(TWO_STATE).unwrap();
        let p = PolicyTable::constant(1, 2, 0);
        assert_eq!(parse_policy(&emit_policy(&p), &doc.instance).unwrap(), p);
        assert!(parse_policy("policy = [[0]]", &doc.instance).is_err());
        assert!(parse_policy("policy = [[0, 1]]", &doc.instance).is_err());
        assert!(parse_policy("policy = [[0, 0], [0, 0]]", &doc.instance).is_err());
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-9, 5e-324, 0.015625, 1e300] {
            let v: toml::Value = toml::from_str(&format!("x = {}", fmt_float(x))).unwrap();
            assert_eq!(v["x"].as_float(), Some(x));
        }
    }
}
