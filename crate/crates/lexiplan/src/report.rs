//! TOML report documents written by the command-line driver.
//!
//! Keys come out in a fixed order and floats use [`fmt_float`], so identical
//! inputs give byte-identical reports. Wall-clock timings are only written
//! when asked for.

use std::fmt::Write as _;
use std::time::Duration;

use lexiplan_core::mdp::{PreferenceIndex, ValueVector};
use lexiplan_core::{Branch, EndDistribution, PolicyTable, QuantileSolveReport};

use crate::format::{emit_policy, fmt_float, fmt_list, fmt_string, InstanceDocument};

fn floats(xs: &[f64]) -> String {
    fmt_list(xs, |x| fmt_float(*x))
}

fn strings(xs: &[String]) -> String {
    fmt_list(xs, |s| fmt_string(s))
}

fn header(out: &mut String, command: &str, doc: &InstanceDocument) {
    let _ = writeln!(out, "command = {}", fmt_string(command));
    let _ = writeln!(out, "instance = {}", fmt_string(&doc.name));
}

fn outcome_block(out: &mut String, doc: &InstanceDocument, dist: &EndDistribution) {
    let _ = writeln!(out, "outcomes = {}", strings(&doc.outcome_labels()));
    let _ = writeln!(out, "end_distribution = {}", floats(&dist.mass));
}

fn state_values(out: &mut String, per_state: &[ValueVector]) {
    out.push_str("state_values = [\n");
    for v in per_state {
        let _ = writeln!(out, "  {},", floats(v));
    }
    out.push_str("]\n");
}

fn timings(out: &mut String, timings: Option<&[(&str, Duration)]>) {
    if let Some(entries) = timings {
        out.push_str("\n[timings]\n");
        for (key, d) in entries {
            let _ = writeln!(out, "{key}_ms = {}", fmt_float(d.as_secs_f64() * 1e3));
        }
    }
}

/// Solution of a lexicographic solve.
pub struct LexReport<'a> {
    pub eps: f64,
    pub policy: &'a PolicyTable,
    pub values_at_start: &'a ValueVector,
    /// Epoch-0 value vector from each start state.
    pub state_values: &'a [ValueVector],
    pub end_distribution: &'a EndDistribution,
}

pub fn emit_lex_report(
    doc: &InstanceDocument,
    report: &LexReport<'_>,
    timing: Option<&[(&str, Duration)]>,
) -> String {
    let mut out = String::new();
    header(&mut out, "solve-lex", doc);
    let _ = writeln!(out, "eps = {}", fmt_float(report.eps));
    let _ = writeln!(out, "levels = {}", report.values_at_start.len());
    outcome_block(&mut out, doc, report.end_distribution);
    let _ = writeln!(out, "values_at_start = {}", floats(report.values_at_start));
    out.push_str(&emit_policy(report.policy));
    state_values(&mut out, report.state_values);
    timings(&mut out, timing);
    out
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Upper => "upper",
        Branch::Lower => "lower",
    }
}

pub fn emit_mqo_report(
    doc: &InstanceDocument,
    taus: &[f64],
    eps: f64,
    report: &QuantileSolveReport,
    state_values_at_0: &[ValueVector],
    dist: &EndDistribution,
    timing: Option<&[(&str, Duration)]>,
) -> String {
    let mut out = String::new();
    header(&mut out, "solve-mqo", doc);
    let _ = writeln!(out, "eps = {}", fmt_float(eps));
    let _ = writeln!(out, "taus = {}", floats(taus));
    let _ = writeln!(
        out,
        "optimal_ranks = {}",
        fmt_list(&report.optimal_ranks, |r| r.0.to_string())
    );
    let labels: Vec<String> = report.optimal_ranks.iter().map(|r| doc.outcome_label(*r)).collect();
    let _ = writeln!(out, "optimal_outcomes = {}", strings(&labels));
    let _ = writeln!(out, "probe_count = {}", fmt_list(&report.probe_count, |c| c.to_string()));
    outcome_block(&mut out, doc, dist);
    let _ = writeln!(out, "values_at_start = {}", floats(&report.final_values));
    out.push_str(&emit_policy(&report.final_policy));
    state_values(&mut out, state_values_at_0);
    for (k, steps) in report.probe_trace.iter().enumerate() {
        out.push_str("\n[[levels]]\n");
        let _ = writeln!(out, "tau = {}", fmt_float(taus[k]));
        let _ = writeln!(out, "rank = {}", report.optimal_ranks[k].0);
        let _ = writeln!(out, "outcome = {}", fmt_string(&labels[k]));
        let _ = writeln!(out, "probe_count = {}", report.probe_count[k]);
        out.push_str("probes = [\n");
        for s in steps {
            let _ = writeln!(
                out,
                "  {{ cdf_rank = {}, candidate = {}, probe_value = {}, cdf_star = {}, branch = \"{}\" }},",
                s.cdf_rank.0,
                s.candidate.0,
                fmt_float(s.probe_value),
                fmt_float(s.cdf_star),
                branch_name(s.branch)
            );
        }
        out.push_str("]\n");
    }
    timings(&mut out, timing);
    out
}

pub fn emit_eval_report(
    doc: &InstanceDocument,
    dist: &EndDistribution,
    cdf: &[f64],
    quantiles: &[(f64, PreferenceIndex)],
    values: Option<(&ValueVector, &[ValueVector])>,
) -> String {
    let mut out = String::new();
    header(&mut out, "eval", doc);
    outcome_block(&mut out, doc, dist);
    let _ = writeln!(out, "total_mass = {}", fmt_float(dist.total()));
    let _ = writeln!(out, "cdf = {}", floats(cdf));
    out.push_str("quantiles = [\n");
    for (tau, rank) in quantiles {
        let _ = writeln!(
            out,
            "  {{ tau = {}, rank = {}, outcome = {} }},",
            fmt_float(*tau),
            rank.0,
            fmt_string(&doc.outcome_label(*rank))
        );
    }
    out.push_str("]\n");
    if let Some((at_start, per_state)) = values {
        let _ = writeln!(out, "values_at_start = {}", floats(at_start));
        state_values(&mut out, per_state);
    }
    out
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub agree: bool,
    pub detail: String,
}

pub fn emit_oracle_report(doc: &InstanceDocument, budget: u64, policies: u64, checks: &[Check]) -> String {
    let mut out = String::new();
    header(&mut out, "oracle", doc);
    let _ = writeln!(out, "budget = {budget}");
    let _ = writeln!(out, "policies = {policies}");
    let verdict = if checks.iter().all(|c| c.agree) { "AGREE" } else { "DISAGREE" };
    let _ = writeln!(out, "verdict = \"{verdict}\"");
    out.push_str("checks = [\n");
    for c in checks {
        let _ = writeln!(
            out,
            "  {{ name = {}, status = \"{}\", detail = {} }},",
            fmt_string(&c.name),
            if c.agree { "AGREE" } else { "DISAGREE" },
            fmt_string(&c.detail)
        );
    }
    out.push_str("]\n");
    out
}
