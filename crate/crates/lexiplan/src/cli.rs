//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 parse, 3 validation, 4 enumeration
//! budget, 5 internal invariant (including oracle disagreement).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lexiplan_core::mdp::DEFAULT_EPS;
use lexiplan_core::oracle::{OracleError, Scheme, DEFAULT_BUDGET};
use lexiplan_core::{
    cdf, evaluate_state_values, evaluate_values, flmdp_solve, lower_quantile, mqo_solve, propagate,
    PreferenceIndex, QuantileError, QuantileObjective,
};

use crate::format::{emit_instance, parse_instance, parse_policy, DocumentError, InstanceDocument};
use crate::generate::{generate_hazard_grid, generate_random, GridParams, HazardSpec, RandomParams};
use crate::report::{emit_eval_report, emit_lex_report, emit_mqo_report, emit_oracle_report, LexReport};
use crate::verify::{oracle_checks, VerifyError};

/// Environment variable overriding the default enumeration budget.
pub const BUDGET_ENV: &str = "LEXIPLAN_BUDGET";

#[derive(Parser, Debug)]
#[command(name = "lexiplan", version, about = "Lexicographic and multi-quantile MDP planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance document against every model invariant.
    Validate { file: PathBuf },
    /// Solve the document's lexicographic reward levels.
    SolveLex {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Append wall-clock timings to the report.
        #[arg(long)]
        timings: bool,
    },
    /// Find optimal quantiles for the document's objective.
    SolveMqo {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long)]
        timings: bool,
    },
    /// Evaluate a fixed policy.
    Eval {
        file: PathBuf,
        /// Any TOML file with a `policy` key, such as a solve report.
        #[arg(long)]
        policy: PathBuf,
        /// Quantile levels; defaults to the document's objective.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Compare the solvers against exhaustive policy enumeration.
    Oracle {
        file: PathBuf,
        /// Run only one brute-force quantile scheme (both by default).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scheme: Option<u8>,
        /// Maximum number of policies to enumerate.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Generate an instance document.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Args, Debug)]
struct GenCommon {
    #[arg(long)]
    seed: u64,
    /// Quantile objective to attach, comma separated.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Output file; stdout when omitted.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Random instance with 1/64-grid probabilities.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        ends: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Attach this many random {0,1} reward levels.
        #[arg(long, default_value_t = 0)]
        reward_levels: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Hazard grid walk.
    Grid {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0.0)]
        slip: f64,
        #[arg(long, default_value_t = 0.0)]
        hazards: f64,
        #[arg(long, default_value_t = 1)]
        near_radius: usize,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Document(#[from] DocumentError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Document(e) if e.is_syntax() => 2,
            CliError::Document(_) | CliError::Invalid(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<QuantileError> for CliError {
    fn from(e: QuantileError) -> Self {
        match e {
            QuantileError::InvariantViolation { .. } | QuantileError::Solve(_) => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::NothingToCheck => CliError::Invalid(e.to_string()),
            VerifyError::Oracle(OracleError::BudgetExceeded { .. }) => CliError::Budget(e.to_string()),
            VerifyError::Quantile(q) => q.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<InstanceDocument, CliError> {
    Ok(parse_instance(&read(path)?)?)
}

fn check_eps(eps: f64) -> Result<f64, CliError> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(eps)
    } else {
        Err(CliError::Usage(format!("--eps {eps} must be finite and >= 0")))
    }
}

fn budget(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{BUDGET_ENV}={v} is not a count"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn validate_cmd(file: &Path) -> Result<String, CliError> {
    let doc = load(file)?;
    let inst = &doc.instance;
    Ok(format!(
        "valid: {} ({} states, {} actions, horizon {}, {} end states)\n",
        doc.name,
        inst.num_states,
        inst.num_actions,
        inst.horizon,
        inst.num_end_states()
    ))
}

fn solve_lex_cmd(file: &Path, eps: f64, timings: bool) -> Result<String, CliError> {
    let doc = load(file)?;
    let eps = check_eps(eps)?;
    let inst = &doc.instance;
    let rewards = doc
        .rewards
        .as_ref()
        .ok_or_else(|| CliError::Invalid("document has no `rewards`".into()))?;
    let start = Instant::now();
    let sol = flmdp_solve(inst, rewards, eps).map_err(internal)?;
    let elapsed = start.elapsed();
    let dist = propagate(inst, &sol.policy).map_err(internal)?;
    let per_state: Vec<_> = (0..inst.num_states).map(|s| sol.values.state_vector(0, s)).collect();
    let report = LexReport {
        eps,
        policy: &sol.policy,
        values_at_start: &sol.value_at_start(inst),
        state_values: &per_state,
        end_distribution: &dist,
    };
    let timing = [("solve", elapsed)];
    Ok(emit_lex_report(&doc, &report, timings.then_some(&timing[..])))
}

fn solve_mqo_cmd(file: &Path, eps: f64, timings: bool) -> Result<String, CliError> {
    let doc = load(file)?;
    let eps = check_eps(eps)?;
    let inst = &doc.instance;
    let objective = doc
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Invalid("document has no `objective`".into()))?;
    let start = Instant::now();
    let report = mqo_solve(inst, objective, eps)?;
    let elapsed = start.elapsed();
    let dist = propagate(inst, &report.final_policy).map_err(internal)?;
    let per_state: Vec<_> =
        (0..inst.num_states).map(|s| report.final_value_tensor.state_vector(0, s)).collect();
    let timing = [("solve", elapsed)];
    Ok(emit_mqo_report(
        &doc,
        objective.taus(),
        eps,
        &report,
        &per_state,
        &dist,
        timings.then_some(&timing[..]),
    ))
}

fn eval_cmd(file: &Path, policy_file: &Path, taus: Option<Vec<f64>>) -> Result<String, CliError> {
    let doc = load(file)?;
    let inst = &doc.instance;
    let policy = parse_policy(&read(policy_file)?, inst)?;
    let taus = match taus {
        Some(t) => QuantileObjective::new(t)
            .map_err(|e| CliError::Usage(format!("--taus: {e}")))?
            .taus()
            .to_vec(),
        None => doc.objective.as_ref().map(|o| o.taus().to_vec()).unwrap_or_default(),
    };
    let dist = propagate(inst, &policy).map_err(internal)?;
    let cdf_table = (0..=inst.num_end_states())
        .map(|r| cdf(&dist, PreferenceIndex(r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(internal)?;
    let quantiles = taus
        .iter()
        .map(|tau| lower_quantile(&dist, *tau).map(|r| (*tau, r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(internal)?;
    let values = match &doc.rewards {
        Some(rewards) => Some((
            evaluate_values(inst, rewards, &policy).map_err(internal)?,
            evaluate_state_values(inst, rewards, &policy).map_err(internal)?,
        )),
        None => None,
    };
    Ok(emit_eval_report(
        &doc,
        &dist,
        &cdf_table,
        &quantiles,
        values.as_ref().map(|(a, b)| (a, b.as_slice())),
    ))
}

fn oracle_cmd(file: &Path, scheme: Option<u8>, budget_flag: Option<u64>, eps: f64) -> Result<(String, bool), CliError> {
    let doc = load(file)?;
    let eps = check_eps(eps)?;
    let budget = budget(budget_flag)?;
    let schemes = match scheme {
        Some(1) => vec![Scheme::QuantileFirst],
        Some(_) => vec![Scheme::Direct],
        None => vec![Scheme::QuantileFirst, Scheme::Direct],
    };
    let (count, checks) = oracle_checks(&doc, &schemes, eps, budget)?;
    let all_agree = checks.iter().all(|c| c.agree);
    Ok((emit_oracle_report(&doc, budget, count, &checks), all_agree))
}

fn gen_cmd(kind: GenKind) -> Result<(String, Option<PathBuf>), CliError> {
    let invalid = |e: crate::generate::GenError| CliError::Invalid(e.to_string());
    let (doc, output) = match kind {
        GenKind::Random { states, actions, horizon, ends, density, reward_levels, common } => {
            let params = RandomParams {
                num_states: states,
                num_actions: actions,
                horizon,
                num_end: ends,
                density,
                reward_levels,
                taus: common.taus,
                seed: common.seed,
            };
            (generate_random(&params).map_err(invalid)?, common.output)
        }
        GenKind::Grid { width, height, horizon, slip, hazards, near_radius, common } => {
            let params = GridParams {
                width,
                height,
                horizon,
                hazards: HazardSpec { slip, hazard_density: hazards, near_radius },
                taus: common.taus,
                seed: common.seed,
            };
            (generate_hazard_grid(&params).map_err(invalid)?, common.output)
        }
    };
    Ok((emit_instance(&doc), output))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };

    let result = match cli.command {
        Command::Validate { file } => validate_cmd(&file).map(|s| (s, true)),
        Command::SolveLex { file, eps, timings } => solve_lex_cmd(&file, eps, timings).map(|s| (s, true)),
        Command::SolveMqo { file, eps, timings } => solve_mqo_cmd(&file, eps, timings).map(|s| (s, true)),
        Command::Eval { file, policy, taus } => eval_cmd(&file, &policy, taus).map(|s| (s, true)),
        Command::Oracle { file, scheme, budget, eps } => oracle_cmd(&file, scheme, budget, eps),
        Command::Gen { kind } => gen_cmd(kind).and_then(|(text, path)| match path {
            Some(path) => std::fs::write(&path, text)
                .map(|_| (String::new(), true))
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
            None => Ok((text, true)),
        }),
    };

    match result {
        Ok((text, ok)) => {
            let _ = out.write_all(text.as_bytes());
            if ok {
                0
            } else {
                let _ = writeln!(err, "oracle disagrees with the solver");
                5
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
