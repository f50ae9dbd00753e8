//! Solver-versus-oracle comparisons behind the `oracle` command.

use lexiplan_core::mdp::{lex_compare, ValueVector};
use lexiplan_core::oracle::{
    brute_force_lex_optimal, brute_force_scheme, policy_count, quantile_of_cdf, OracleError, Scheme,
    SchemeResult,
};
use lexiplan_core::{
    evaluate_values, flmdp_solve, lower_quantile, mqo_solve, propagate, QuantileError, SolveError,
};

use crate::format::InstanceDocument;
use crate::report::Check;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("document has neither `rewards` nor `objective`")]
    NothingToCheck,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
}

fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

fn lex_equal(name: impl Into<String>, solver: &ValueVector, oracle: &ValueVector, eps: f64) -> Check {
    let agree = lex_compare(solver, oracle, eps) == Ok(std::cmp::Ordering::Equal);
    Check {
        name: name.into(),
        agree,
        detail: format!("solver {} oracle {}", vec_str(solver), vec_str(oracle)),
    }
}

/// Runs every applicable comparison. `schemes` selects which brute-force
/// quantile schemes to run when the document has an objective.
pub fn oracle_checks(
    doc: &InstanceDocument,
    schemes: &[Scheme],
    eps: f64,
    budget: u64,
) -> Result<(u64, Vec<Check>), VerifyError> {
    let inst = &doc.instance;
    if doc.rewards.is_none() && doc.objective.is_none() {
        return Err(VerifyError::NothingToCheck);
    }
    let count = policy_count(inst).filter(|c| *c <= budget).ok_or(OracleError::BudgetExceeded {
        count: policy_count(inst),
        budget,
    })?;
    let mut checks = Vec::new();

    if let Some(rewards) = &doc.rewards {
        let sol = flmdp_solve(inst, rewards, eps)?;
        let oracle = brute_force_lex_optimal(inst, rewards, eps, budget)?;
        checks.push(lex_equal("lex-value-at-start", &sol.value_at_start(inst), &oracle.best, eps));
        for (s, best) in oracle.best_per_state.iter().enumerate() {
            checks.push(lex_equal(
                format!("lex-value-from-state-{s}"),
                &sol.values.state_vector(0, s),
                best,
                eps,
            ));
        }
        let achieved = evaluate_values(inst, rewards, &sol.policy).map_err(OracleError::from)?;
        checks.push(lex_equal("lex-policy-attains-optimum", &achieved, &oracle.best, eps));
    }

    if let Some(objective) = &doc.objective {
        let report = mqo_solve(inst, objective, eps)?;
        let ranks: Vec<usize> = report.optimal_ranks.iter().map(|r| r.0).collect();
        let mut probe_source: Option<SchemeResult> = None;
        for &scheme in schemes {
            let label = match scheme {
                Scheme::QuantileFirst => "quantile-first",
                Scheme::Direct => "direct",
            };
            let out = brute_force_scheme(inst, objective, scheme, eps, budget)?;
            let oracle_ranks: Vec<usize> = out.ranks.iter().map(|r| r.0).collect();
            checks.push(Check {
                name: format!("{label}-ranks"),
                agree: oracle_ranks == ranks,
                detail: format!("solver {ranks:?} oracle {oracle_ranks:?}"),
            });
            checks.push(lex_equal(
                format!("{label}-final-values"),
                &report.final_values,
                &out.final_values,
                eps,
            ));
            if probe_source.is_none() || scheme == Scheme::Direct {
                probe_source = Some(out);
            }
        }

        if let Some(oracle) = probe_source {
            let mut worst: f64 = 0.0;
            for (k, steps) in report.probe_trace.iter().enumerate() {
                for step in steps {
                    worst = worst.max((step.cdf_star - oracle.optimal_cdf[k][step.cdf_rank.0]).abs());
                }
            }
            checks.push(Check {
                name: "probe-min-cdf".into(),
                agree: worst <= eps,
                detail: format!("max |1 - probe - min F| = {worst:e}"),
            });
            let from_cdf: Vec<usize> = objective
                .taus()
                .iter()
                .zip(&oracle.optimal_cdf)
                .map(|(tau, f)| quantile_of_cdf(f, *tau).0)
                .collect();
            checks.push(Check {
                name: "probe-quantiles".into(),
                agree: from_cdf == ranks,
                detail: format!("solver {ranks:?} from minimal CDF {from_cdf:?}"),
            });
        }

        let dist = propagate(inst, &report.final_policy).map_err(OracleError::from)?;
        let achieved = objective
            .taus()
            .iter()
            .map(|tau| lower_quantile(&dist, *tau).map(|r| r.0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(OracleError::from)?;
        checks.push(Check {
            name: "final-policy-quantiles".into(),
            agree: achieved == ranks,
            detail: format!("solver {ranks:?} achieved {achieved:?}"),
        });
    }
    Ok((count, checks))
}
