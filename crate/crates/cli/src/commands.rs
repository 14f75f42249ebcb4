//! The three subcommands. Each writes results to `out`, diagnostics to `err`,
//! and returns the process exit status.

use std::fs;
use std::io::Write;
use std::path::Path;

use pdilqr::lqr::{self, LqrData, LqrError};
use pdilqr::nlp::{constraint_residuals, inf_norm, objective, Iterate};
use pdilqr::problems::{make_problem, PartialProblemSpec, ProblemSpec};
use pdilqr::sqp::{solve, SolveStatus, SolverConfig, TraceRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{CheckArgs, LqrArgs, SolveArgs};
use crate::format::{sci, to_json, trace_csv, trace_table};
use crate::verify::{check_instance, instance_seed};
use crate::Exit;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        if field == "." {
            format!("{}: {}", path.display(), e.inner())
        } else {
            format!("{}: field `{field}`: {}", path.display(), e.inner())
        }
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn usage(err: &mut dyn Write, msg: &str) -> Exit {
    let _ = writeln!(err, "error: {msg}");
    Exit::Usage
}

fn problem_spec(args: &SolveArgs) -> Result<ProblemSpec, String> {
    let spec = match (&args.problem, &args.spec) {
        (Some(name), None) => ProblemSpec::defaults(name).map_err(|e| e.to_string())?,
        (None, Some(path)) => {
            let partial: PartialProblemSpec = read_json(path)?;
            partial.resolve().map_err(|e| format!("{}: {e}", path.display()))?
        }
        _ => return Err("exactly one of --problem and --spec is required".into()),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn solver_config(args: &SolveArgs) -> Result<SolverConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => read_json(path)?,
        None => SolverConfig::default(),
    };
    if let Some(b) = args.backend {
        cfg.lqr_backend = b.into();
    }
    if let Some(h) = args.hessian {
        cfg.hessian_mode = h.into();
    }
    if let Some(k) = args.max_iters {
        cfg.max_iterations = k;
    }
    if let Some(t) = args.tol_step {
        cfg.tol_step = t;
    }
    if let Some(t) = args.tol_feas {
        cfg.tol_feas = t;
    }
    if let Some(p) = args.penalty_mode {
        cfg.penalty_mode = p.into();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Everything a solve produced, as written by `--trace-out` in JSON form.
#[derive(Debug, Serialize)]
pub struct TraceDocument<'a> {
    pub problem: &'a ProblemSpec,
    pub config: &'a SolverConfig,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_max_violation: f64,
    pub records: &'a [TraceRecord],
    pub solution: &'a Iterate,
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "max_iterations",
        SolveStatus::LineSearchFailure => "line_search_failure",
        SolveStatus::RegularizationFailure => "regularization_failure",
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let (spec, cfg) = match problem_spec(args).and_then(|s| Ok((s, solver_config(args)?))) {
        Ok(v) => v,
        Err(msg) => return usage(err, &msg),
    };
    let problem = match make_problem(&spec) {
        Ok(p) => p,
        Err(e) => return usage(err, &e.to_string()),
    };
    let result = match solve(&problem, problem.cold_start(), &cfg) {
        Ok(r) => r,
        Err(e) => return usage(err, &e.to_string()),
    };
    let final_objective = objective(&problem, &result.iterate);
    let final_max_violation = inf_norm(&constraint_residuals(&problem, &result.iterate));

    let _ = writeln!(
        out,
        "problem: {}  N={}  dt={}  integrator={}",
        spec.name,
        spec.horizon,
        spec.dt,
        enum_name(&spec.integrator)
    );
    let _ = writeln!(
        out,
        "solver: backend={}  hessian={}  penalty={}",
        enum_name(&cfg.lqr_backend),
        enum_name(&cfg.hessian_mode),
        enum_name(&cfg.penalty_mode)
    );
    let _ = write!(out, "{}", trace_table(&result.trace));
    let _ = writeln!(out, "status: {}", status_name(result.status));
    let _ = writeln!(out, "iterations: {}", result.trace.len());
    let _ = writeln!(out, "objective: {}", sci(final_objective, 6));
    let _ = writeln!(out, "max constraint violation: {}", sci(final_max_violation, 6));

    if let Some(path) = &args.trace_out {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let text = if is_csv {
            trace_csv(&result.trace).map_err(|e| e.to_string())
        } else {
            to_json(&TraceDocument {
                problem: &spec,
                config: &cfg,
                status: result.status,
                iterations: result.trace.len(),
                final_objective,
                final_max_violation,
                records: &result.trace.records,
                solution: &result.iterate,
            })
            .map_err(|e| e.to_string())
        };
        if let Err(msg) = text.and_then(|t| write_file(path, &t)) {
            return usage(err, &msg);
        }
    }
    result.status.into()
}

pub fn cmd_lqr(args: &LqrArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let data: LqrData = match read_json(&args.input) {
        Ok(d) => d,
        Err(msg) => return usage(err, &msg),
    };
    if let Err(e) = data.validate() {
        return usage(err, &format!("{}: {e}", args.input.display()));
    }
    let solution = match lqr::solve(&data, args.backend.into()) {
        Ok(s) => s,
        Err(e @ LqrError::Dimension { .. }) => return usage(err, &e.to_string()),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return Exit::RegularizationFailure;
        }
    };
    let text = match to_json(&solution) {
        Ok(t) => t,
        Err(e) => return usage(err, &e.to_string()),
    };
    match &args.out {
        Some(path) => {
            if let Err(msg) = write_file(path, &text) {
                return usage(err, &msg);
            }
        }
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Exit::Success
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    if args.num_instances == 0 {
        let _ = writeln!(err, "warning: zero instances requested, nothing was checked");
        let _ = writeln!(out, "checked 0 instances: vacuous pass");
        return Exit::Success;
    }
    if args.max_rel_err.is_some_and(|t| t.is_nan() || t < 0.0) {
        return usage(err, "--max-rel-err must be non-negative");
    }
    let mut comparisons = 0;
    let mut failed_seeds = Vec::new();
    for index in 0..args.num_instances {
        let seed = instance_seed(args.seed, index);
        let report = check_instance(seed, args.max_rel_err);
        comparisons += report.comparisons.len();
        for c in report.failures() {
            let _ = writeln!(out, "FAIL seed {seed}: {} rel err {} > {}", c.name, sci(c.error, 3), sci(c.tol, 3));
        }
        if !report.passed() {
            failed_seeds.push(seed);
        }
    }
    let _ = writeln!(
        out,
        "checked {} instances ({comparisons} comparisons): {} passed, {} failed",
        args.num_instances,
        args.num_instances - failed_seeds.len(),
        failed_seeds.len()
    );
    match failed_seeds.first() {
        None => Exit::Success,
        Some(seed) => {
            let _ =
                writeln!(err, "failing seed: {seed} (reproduce with: pdilqr check --seed {seed} --num-instances 1)");
            Exit::CheckFailed
        }
    }
}
