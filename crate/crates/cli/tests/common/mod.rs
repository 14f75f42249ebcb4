#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdilqr::sqp::{SolverTrace, TraceRecord};

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares with a checked-in file; `UPDATE_GOLDEN=1` rewrites it instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("output differs from {}:\n{actual}", path.display()))
    }
}

pub fn assert_golden(name: &str, actual: &str) {
    if let Err(e) = check_golden(name, actual) {
        panic!("{e}");
    }
}

pub fn pdilqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdilqr")).args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn synthetic_trace() -> SolverTrace {
    let row = |iteration, objective, c_norm_sq, merit_derivative, alpha| TraceRecord {
        iteration,
        objective,
        c_norm_sq,
        merit_derivative,
        alpha,
        rho: 2.0,
        max_mu: 0.0,
        linesearch_steps: 1,
        merit: Some(objective),
        merit_trial: None,
    };
    SolverTrace {
        records: vec![
            row(1, 1234.5678, 12.0, -3.5e3, 0.25),
            row(2, 98.7654321, 0.059, -1.25, 0.5),
            row(10, 3.25, 1.5e-29, -2.0e-15, 1.0),
            row(123, -0.001, 0.0, 0.0, 1.0),
        ],
    }
}

/// `solve` output with the rounding-level residual line masked, plus that residual.
pub fn mask_violation(out: &str) -> (String, Vec<f64>) {
    let mut lines = Vec::new();
    let mut values = Vec::new();
    for l in out.lines() {
        match l.strip_prefix("max constraint violation: ") {
            Some(x) => {
                values.push(x.parse().unwrap_or(f64::NAN));
                lines.push("max constraint violation: <rounding>".to_string());
            }
            None => lines.push(l.to_string()),
        }
    }
    (lines.join("\n") + "\n", values)
}

/// Command lines paired with the exit code they must produce. Config fixtures
/// are written into `dir`.
pub fn exit_cases(dir: &Path) -> Vec<(Vec<String>, i32)> {
    let config = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let one_trial = config("ls.json", r#"{"max_linesearch_steps": 1}"#);
    let tiny_mu = config("mu.json", r#"{"mu_max": 1e-7, "hessian_mode": "exact"}"#);
    let bad_cfg = config("bad.json", r#"{"armijo_factor": 2.0}"#);
    let indefinite = golden("indefinite_lqr.json").to_str().unwrap().to_string();
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["solve", "--problem", "double_integrator"], 0),
        (vec!["solve", "--problem", "pendulum_swingup", "--max-iters", "2"], 1),
        (vec!["solve", "--problem", "cartpole_swingup", "--config", &one_trial], 2),
        (vec!["solve", "--problem", "cartpole_swingup", "--config", &tiny_mu], 3),
        (vec!["lqr", &indefinite], 3),
        (vec!["solve"], 4),
        (vec!["solve", "--problem", "no_such_problem"], 4),
        (vec!["solve", "--problem", "double_integrator", "--backend", "gpu"], 4),
        (vec!["solve", "--problem", "double_integrator", "--config", &bad_cfg], 4),
        (vec!["solve", "--problem", "double_integrator", "--tol-step", "-1"], 4),
        (vec!["lqr", "/nonexistent/input.json"], 4),
        (vec!["frobnicate"], 4),
        (vec!["check", "--num-instances", "3"], 0),
        (vec!["check", "--num-instances", "0"], 0),
        (vec!["check", "--num-instances", "2", "--max-rel-err", "0"], 5),
        (vec!["--help"], 0),
    ];
    cases.into_iter().map(|(a, c)| (a.into_iter().map(String::from).collect(), c)).collect()
}
