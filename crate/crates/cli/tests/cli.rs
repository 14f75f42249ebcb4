//! The command-line contract: table layout, machine formats and exit codes.

mod common;

use std::fs;

use common::{assert_golden, code, exit_cases, golden, mask_violation, pdilqr, stderr, stdout, synthetic_trace};
use pdilqr::lqr::LqrSolution;
use pdilqr_cli::format::{to_json, trace_csv, trace_table, CSV_COLUMNS};

#[test]
fn table_layout_is_stable() {
    assert_golden("table_synthetic.txt", &trace_table(&synthetic_trace()));
}

#[test]
fn csv_columns_follow_the_table() {
    let csv = trace_csv(&synthetic_trace()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(&CSV_COLUMNS[..5], &["iteration", "objective", "c_norm_sq", "merit_derivative", "alpha"]);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), CSV_COLUMNS.len());
    assert_eq!(first[1].parse::<f64>().unwrap(), 1234.5678);
    assert_eq!(first[9], "");
    assert_golden("trace_synthetic.csv", &csv);
}

#[test]
fn solve_double_integrator_prints_one_row() {
    let o = pdilqr(&["solve", "--problem", "double_integrator"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    // The residual after one exact step sits at rounding level; check it numerically.
    let (masked, violation) = mask_violation(&out);
    assert_eq!(violation.len(), 1);
    assert!(violation[0] <= 1e-12);
    assert_golden("solve_double_integrator.txt", &masked);
    let rows: Vec<&str> = out.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).collect();
    assert_eq!(rows.len(), 1);
}

#[test]
fn backends_agree_on_the_objective_column() {
    let dir = tempfile::tempdir().unwrap();
    let run = |backend: &str| -> serde_json::Value {
        let path = dir.path().join(format!("{backend}.json"));
        let o = pdilqr(&[
            "solve",
            "--problem",
            "pendulum_swingup",
            "--backend",
            backend,
            "--trace-out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    };
    let seq = run("sequential");
    let par = run("parallel");
    let col = |v: &serde_json::Value| -> Vec<f64> {
        v["records"].as_array().unwrap().iter().map(|r| r["objective"].as_f64().unwrap()).collect()
    };
    let (a, b) = (col(&seq), col(&par));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-6 * x.abs(), "{x} vs {y}");
    }
    assert_eq!(seq["status"], "converged");
}

#[test]
fn trace_json_holds_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.json");
    let o =
        pdilqr(&["solve", "--problem", "pendulum_swingup", "--max-iters", "2", "--trace-out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let text = fs::read_to_string(&path).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["records"].as_array().unwrap().len(), 2);
    assert_eq!(doc["status"], "max_iterations");
    assert_eq!(doc["problem"]["name"], "pendulum_swingup");
    let obj = doc["records"][0]["objective"].as_f64().unwrap();
    assert!(text.contains(&pdilqr_cli::format::sig17(obj)));
    assert_eq!(doc["solution"]["x"].as_array().unwrap().len(), 101);
}

#[test]
fn csv_trace_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let o = pdilqr(&["solve", "--problem", "double_integrator", "--trace-out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("iteration,objective,c_norm_sq,merit_derivative,alpha,"));
}

#[test]
fn spec_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"name": "double_integrator", "horizon": 5, "start": [0, 0]}"#).unwrap();
    let o = pdilqr(&["solve", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("problem: double_integrator  N=5  dt=0.1"));
    assert!(stdout(&o).contains("iterations: 0"));

    fs::write(&spec, r#"{"name": "double_integrator", "horizon": 5, "bogus": 1}"#).unwrap();
    let o = pdilqr(&["solve", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn lqr_scalar_fixture_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.json");
    let o = pdilqr(&["lqr", golden("scalar_lqr.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let sol: LqrSolution = serde_json::from_str(&text).unwrap();
    let flat = |vs: &[nalgebra::DVector<f64>]| vs.iter().flat_map(|v| v.iter().copied()).collect::<Vec<_>>();
    for (got, want) in [(flat(&sol.x), vec![2.0, 1.0]), (flat(&sol.u), vec![-1.0]), (flat(&sol.lambda), vec![1.0, 1.0])]
    {
        assert_eq!(got.len(), want.len());
        assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-12), "{got:?} vs {want:?}");
    }
    // Parsing and re-emitting loses nothing.
    assert_eq!(to_json(&sol).unwrap(), text);

    let o = pdilqr(&["lqr", golden("scalar_lqr.json").to_str().unwrap(), "--backend", "parallel"]);
    assert_eq!(code(&o), 0);
    let par: LqrSolution = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(pdilqr::lqr::relative_error(&par.x, &sol.x) <= 1e-12);
}

#[test]
fn lqr_zero_cost_has_zero_multipliers() {
    let o = pdilqr(&["lqr", golden("zero_cost_lqr.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_golden("zero_cost_lqr.solution.json", &stdout(&o));
    let sol: LqrSolution = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(sol.lambda.iter().all(|l| l.iter().all(|&v| v == 0.0)));
}

#[test]
fn lqr_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"stages": [{"Q": [[0]], "R": [[1]]}], "Q_N": [[1]], "q_N": [0], "s_0": [2]}"#, "`M`"),
        (r#"{"stages": [{"Q": [[0]], "R": "x", "M": [[0]]}]}"#, "stages[0].R"),
        (
            r#"{"stages": [{"Q": [[0]], "R": [[1]], "M": [[0]], "q": [0], "r": [0], "A": [[1]], "B": [[1, 2]], "c": [0]}],
                "Q_N": [[1]], "q_N": [0], "s_0": [2]}"#,
            "stages[0].B",
        ),
        ("not json", "expected"),
    ];
    for (i, (doc, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        fs::write(&path, doc).unwrap();
        let o = pdilqr(&["lqr", path.to_str().unwrap()]);
        assert_eq!(code(&o), 4, "case {i}");
        assert!(stderr(&o).contains(field), "case {i}: {}", stderr(&o));
    }
    let o = pdilqr(&["lqr", "/nonexistent/input.json"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn exit_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    for (args, expected) in exit_cases(dir.path()) {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = pdilqr(&argv);
        assert_eq!(code(&o), expected, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn check_reports_reproducible_seed() {
    let o = pdilqr(&["check", "--seed", "40", "--num-instances", "3", "--max-rel-err", "0"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("failing seed: 40"), "{}", stderr(&o));
    let again = pdilqr(&["check", "--seed", "40", "--num-instances", "1", "--max-rel-err", "0"]);
    let first_lines =
        |s: String| s.lines().filter(|l| l.starts_with("FAIL seed 40")).map(String::from).collect::<Vec<_>>();
    assert_eq!(first_lines(stdout(&o)), first_lines(stdout(&again)));

    let o = pdilqr(&["check", "--num-instances", "0"]);
    assert!(stderr(&o).contains("warning"));
    assert!(stdout(&o).contains("vacuous pass"));
}
