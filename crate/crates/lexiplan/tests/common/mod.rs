#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lexiplan")
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests"))
        .env_remove("LEXIPLAN_BUDGET")
        .output()
        .expect("spawn lexiplan")
}

/// Golden cases: output file name and arguments, run from the tests directory.
pub const GOLDEN: &[(&str, &[&str])] = &[
    ("validate-two_action.txt", &["validate", "data/two_action.toml"]),
    ("validate-grid.txt", &["validate", "data/grid.toml"]),
    ("solve-lex-two_action.toml", &["solve-lex", "data/two_action.toml"]),
    ("solve-lex-random.toml", &["solve-lex", "data/random.toml"]),
    ("solve-mqo-two_action.toml", &["solve-mqo", "data/two_action.toml"]),
    ("solve-mqo-all_timeout.toml", &["solve-mqo", "data/all_timeout.toml"]),
    ("solve-mqo-boundary.toml", &["solve-mqo", "data/boundary.toml"]),
    ("solve-mqo-random.toml", &["solve-mqo", "data/random.toml"]),
    ("solve-mqo-grid.toml", &["solve-mqo", "data/grid.toml"]),
    ("solve-mqo-tiny_grid.toml", &["solve-mqo", "data/tiny_grid.toml"]),
    (
        "eval-random.toml",
        &["eval", "data/random.toml", "--policy", "golden/solve-mqo-random.toml"],
    ),
    ("oracle-two_action.toml", &["oracle", "data/two_action.toml"]),
    ("oracle-all_timeout.toml", &["oracle", "data/all_timeout.toml"]),
    ("oracle-boundary.toml", &["oracle", "data/boundary.toml"]),
    ("oracle-random.toml", &["oracle", "data/random.toml"]),
    ("oracle-tiny_grid.toml", &["oracle", "data/tiny_grid.toml"]),
    (
        "gen-random.toml",
        &[
            "gen", "random", "--states", "6", "--actions", "2", "--horizon", "2", "--ends", "3",
            "--density", "0.5", "--reward-levels", "2", "--taus", "0.2,0.5,0.9", "--seed", "17",
        ],
    ),
    (
        "gen-grid.toml",
        &[
            "gen", "grid", "--width", "3", "--height", "3", "--horizon", "6", "--slip", "0.125",
            "--hazards", "0.25", "--taus", "0.3,0.8", "--seed", "4",
        ],
    ),
];

/// Outcome of one golden case.
pub struct GoldenResult {
    pub name: &'static str,
    pub stable: bool,
    pub matches: bool,
}

/// Runs each case twice and compares against the checked-in output.
/// `LEXIPLAN_UPDATE_GOLDEN=1` rewrites the files instead.
pub fn check_golden() -> Vec<GoldenResult> {
    let update = std::env::var_os("LEXIPLAN_UPDATE_GOLDEN").is_some();
    let mut results = Vec::new();
    for (name, args) in GOLDEN {
        let first = run(args);
        let second = run(args);
        let ok = first.status.success() && second.status.success();
        let stable = ok && first.stdout == second.stdout;
        let path = golden_dir().join(name);
        if update && ok {
            std::fs::write(&path, &first.stdout).expect("write golden");
        }
        let expected = std::fs::read(&path).unwrap_or_default();
        results.push(GoldenResult { name, stable, matches: ok && expected == first.stdout });
    }
    results
}
