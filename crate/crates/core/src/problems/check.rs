#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lqr::random::rng;
use crate::nlp::{lagrangian, lagrangian_gradient, HessianMode, Iterate, Linearization, OcpProblem};

/// Worst agreement of one evaluator with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorReport {
    pub evaluator: String,
    /// `max|analytic - fd| / max(1, max|fd|)`, worst over the sampled points.
    pub max_rel_error: f64,
    pub worst_stage: Option<usize>,
    pub worst_x: Vec<f64>,
    pub worst_u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub evaluators: Vec<EvaluatorReport>,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.evaluators.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_error() <= tol
    }

    pub fn get(&self, evaluator: &str) -> Option<&EvaluatorReport> {
        self.evaluators.iter().find(|e| e.evaluator == evaluator)
    }
}

fn rel_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    if analytic.shape() != fd.shape() {
        return f64::INFINITY;
    }
    let err = (analytic - fd).amax();
    if err.is_nan() {
        return f64::INFINITY;
    }
    err / fd.amax().max(1.0)
}

/// Central-difference Jacobian of `f` at `z`, one column per coordinate.
fn central_jacobian(z: &DVector<f64>, step: f64, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..z.len())
        .map(|j| {
            let mut hi = z.clone();
            let mut lo = z.clone();
            hi[j] += step;
            lo[j] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn split(z: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

struct Tally {
    report: EvaluatorReport,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally {
            report: EvaluatorReport {
                evaluator: name.into(),
                max_rel_error: 0.0,
                worst_stage: None,
                worst_x: vec![],
                worst_u: vec![],
            },
        }
    }

    fn record(&mut self, err: f64, stage: Option<usize>, x: &DVector<f64>, u: Option<&DVector<f64>>) {
        if err > self.report.max_rel_error || self.report.worst_x.is_empty() {
            self.report.max_rel_error = err;
            self.report.worst_stage = stage;
            self.report.worst_x = x.iter().copied().collect();
            self.report.worst_u = u.map(|u| u.iter().copied().collect()).unwrap_or_default();
        }
    }
}

/// Compares every analytic derivative of `problem` with central differences of
/// step `step` at `num_points` random stage points drawn from `seed`.
///
/// States and controls are sampled uniformly in `[-2, 2]`, multipliers for the
/// dynamics contraction in `[-1, 1]`.
pub fn derivative_check(problem: &dyn OcpProblem, num_points: usize, step: f64, seed: u64) -> DerivativeReport {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let mut rng = rng(seed);
    let mut cost_grad = Tally::new("stage_cost_gradient");
    let mut cost_hess = Tally::new("stage_cost_hessian");
    let mut dyn_jac = Tally::new("dynamics_jacobian");
    let mut dyn_hess = Tally::new("dynamics_hessian_contraction");
    let mut term_grad = Tally::new("terminal_cost_gradient");
    let mut term_hess = Tally::new("terminal_cost_hessian");
    let mut has_contraction = false;

    for _ in 0..num_points {
        let stage = rng.random_range(0..problem.horizon());
        let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let u = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let lambda = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let z = stack(&x, &u);

        let fd = central_jacobian(&z, step, |z| {
            let (x, u) = split(z, n);
            DVector::from_element(1, problem.stage_cost(stage, &x, &u))
        });
        let g = problem.stage_cost_gradient(stage, &x, &u);
        cost_grad.record(rel_error(&column(&g), &fd.transpose()), Some(stage), &x, Some(&u));

        let fd = central_jacobian(&z, step, |z| {
            let (x, u) = split(z, n);
            problem.stage_cost_gradient(stage, &x, &u)
        });
        cost_hess.record(rel_error(&problem.stage_cost_hessian(stage, &x, &u), &fd), Some(stage), &x, Some(&u));

        let fd = central_jacobian(&z, step, |z| {
            let (x, u) = split(z, n);
            problem.dynamics(stage, &x, &u)
        });
        let (A, B) = problem.dynamics_jacobians(stage, &x, &u);
        let mut jac = DMatrix::zeros(n, n + m);
        if A.shape() == (n, n) && B.shape() == (n, m) {
            jac.view_mut((0, 0), (n, n)).copy_from(&A);
            jac.view_mut((0, n), (n, m)).copy_from(&B);
            dyn_jac.record(rel_error(&jac, &fd), Some(stage), &x, Some(&u));
        } else {
            dyn_jac.record(f64::INFINITY, Some(stage), &x, Some(&u));
        }

        if let Some(h) = problem.dynamics_hessian_contraction(stage, &x, &u, &lambda) {
            has_contraction = true;
            let fd = central_jacobian(&z, step, |z| {
                let (x, u) = split(z, n);
                let (A, B) = problem.dynamics_jacobians(stage, &x, &u);
                stack(&(A.transpose() * &lambda), &(B.transpose() * &lambda))
            });
            dyn_hess.record(rel_error(&h, &fd), Some(stage), &x, Some(&u));
        }

        let fd = central_jacobian(&x, step, |x| DVector::from_element(1, problem.terminal_cost(x)));
        term_grad.record(rel_error(&column(&problem.terminal_cost_gradient(&x)), &fd.transpose()), None, &x, None);
        let fd = central_jacobian(&x, step, |x| problem.terminal_cost_gradient(x));
        term_hess.record(rel_error(&problem.terminal_cost_hessian(&x), &fd), None, &x, None);
    }

    let mut evaluators = vec![cost_grad.report, cost_hess.report, dyn_jac.report];
    if has_contraction {
        evaluators.push(dyn_hess.report);
    }
    evaluators.push(term_grad.report);
    evaluators.push(term_hess.report);
    DerivativeReport { evaluators }
}

/// Primal coordinates `(x_0, u_0, ..., x_{N-1}, u_{N-1}, x_N)` flattened.
fn flatten(iterate: &Iterate) -> DVector<f64> {
    let mut z = Vec::new();
    for (x, u) in iterate.x.iter().zip(&iterate.u) {
        z.extend(x.iter().chain(u.iter()));
    }
    z.extend(iterate.x.last().into_iter().flatten());
    DVector::from_vec(z)
}

fn unflatten(z: &DVector<f64>, like: &Iterate) -> Iterate {
    let (n, m) = (like.x[0].len(), like.u.first().map_or(0, |u| u.len()));
    let N = like.u.len();
    let x = (0..=N).map(|i| z.rows(i * (n + m), n).into_owned()).collect();
    let u = (0..N).map(|i| z.rows(i * (n + m) + n, m).into_owned()).collect();
    Iterate { x, u, lambda: like.lambda.clone() }
}

fn flatten_gradient(problem: &dyn OcpProblem, iterate: &Iterate) -> DVector<f64> {
    let g = lagrangian_gradient(problem, iterate);
    DVector::from_iterator(
        g.stages.iter().map(|s| s.len()).sum::<usize>() + g.terminal.len(),
        g.stages.iter().flatten().chain(g.terminal.iter()).copied(),
    )
}

/// Checks `lagrangian_gradient` against central differences of the Lagrangian,
/// and the exact-mode Hessian blocks against central differences of the
/// gradient, over every primal coordinate of `iterate`. Entries outside the
/// diagonal blocks must vanish.
pub fn lagrangian_check(problem: &dyn OcpProblem, iterate: &Iterate, step: f64) -> DerivativeReport {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (N, n, m) = (problem.horizon(), problem.state_dim(), problem.control_dim());
    let k = n + m;
    let z = flatten(iterate);
    let stage_of = |j: usize| (j / k).min(N);
    let mut grad = Tally::new("lagrangian_gradient");
    let mut hess = Tally::new("hessian_blocks");

    let fd = central_jacobian(&z, step, |z| DVector::from_element(1, lagrangian(problem, &unflatten(z, iterate))));
    let g = flatten_gradient(problem, iterate);
    grad.record(rel_error(&column(&g), &fd.transpose()), None, &iterate.x[0], iterate.u.first());

    let fd = central_jacobian(&z, step, |z| flatten_gradient(problem, &unflatten(z, iterate)));
    let blocks = Linearization::new(problem, iterate, HessianMode::Exact).hessians;
    let mut dense = DMatrix::zeros(z.len(), z.len());
    for i in 0..=N {
        let b = blocks.block(i);
        dense.view_mut((i * k, i * k), b.shape()).copy_from(b);
    }
    let scale = fd.amax().max(1.0);
    for j in 0..z.len() {
        let err = (dense.column(j) - fd.column(j)).amax() / scale;
        let i = stage_of(j);
        hess.record(if err.is_nan() { f64::INFINITY } else { err }, Some(i), &iterate.x[i], iterate.u.get(i));
    }
    DerivativeReport { evaluators: vec![grad.report, hess.report] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, BuiltinProblem, Integrator, LqrProblem, ProblemSpec, REGISTRY};

    fn builtin(name: &str) -> BuiltinProblem {
        make_problem(&ProblemSpec::defaults(name).unwrap()).unwrap()
    }

    #[test]
    fn pendulum_passes() {
        let report = derivative_check(&builtin("pendulum_swingup"), 100, 1e-6, 0);
        assert_eq!(report.evaluators.len(), 6);
        assert!(report.passes(1e-5), "{report:#?}");
    }

    #[test]
    fn every_registered_problem_passes_with_both_integrators() {
        for name in REGISTRY {
            for integrator in [Integrator::Rk4, Integrator::Euler] {
                let spec = ProblemSpec { integrator, ..ProblemSpec::defaults(name).unwrap() };
                let report = derivative_check(&make_problem(&spec).unwrap(), 50, 1e-6, 1);
                assert!(report.passes(1e-5), "{name} {integrator:?}: {report:#?}");
            }
        }
    }

    #[test]
    fn affine_dynamics_are_exact() {
        let report = derivative_check(&builtin("double_integrator"), 20, 1e-3, 2);
        assert!(report.get("dynamics_jacobian").unwrap().max_rel_error <= 1e-10, "{report:#?}");
        let lqr = LqrProblem::new(crate::lqr::random::random_lqr(&mut rng(4), 6, 3, 2));
        let report = derivative_check(&lqr, 20, 1e-3, 3);
        assert!(report.passes(1e-10), "{report:#?}");
    }

    #[test]
    fn lagrangian_check_on_lqr_is_exact() {
        let lqr = LqrProblem::new(crate::lqr::random::random_lqr(&mut rng(6), 5, 3, 2));
        let mut it = Iterate::zeros(&lqr);
        let mut r = rng(7);
        for v in it.x.iter_mut().chain(it.u.iter_mut()).chain(it.lambda.iter_mut()) {
            v.iter_mut().for_each(|e| *e = r.random_range(-1.0..1.0));
        }
        let report = lagrangian_check(&lqr, &it, 1e-3);
        assert!(report.passes(1e-9), "{report:#?}");
    }

    struct Corrupted(BuiltinProblem);

    impl OcpProblem for Corrupted {
        fn horizon(&self) -> usize {
            self.0.horizon()
        }
        fn state_dim(&self) -> usize {
            self.0.state_dim()
        }
        fn control_dim(&self) -> usize {
            self.0.control_dim()
        }
        fn initial_state(&self) -> DVector<f64> {
            self.0.initial_state()
        }
        fn stage_cost(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
            self.0.stage_cost(i, x, u)
        }
        fn stage_cost_gradient(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            self.0.stage_cost_gradient(i, x, u)
        }
        fn stage_cost_hessian(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
            self.0.stage_cost_hessian(i, x, u)
        }
        fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
            self.0.terminal_cost(x)
        }
        fn terminal_cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            self.0.terminal_cost_gradient(x)
        }
        fn terminal_cost_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            self.0.terminal_cost_hessian(x)
        }
        fn dynamics(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            self.0.dynamics(i, x, u)
        }
        fn dynamics_jacobians(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
            let (mut A, B) = self.0.dynamics_jacobians(i, x, u);
            A[(0, 1)] += 0.1;
            (A, B)
        }
    }

    #[test]
    fn corrupted_jacobian_is_flagged() {
        let report = derivative_check(&Corrupted(builtin("pendulum_swingup")), 10, 1e-6, 5);
        let jac = report.get("dynamics_jacobian").unwrap();
        assert!(jac.max_rel_error >= 1e-2, "{report:#?}");
        assert!(report.get("stage_cost_gradient").unwrap().max_rel_error <= 1e-5);
        assert!(report.get("dynamics_hessian_contraction").is_none());
    }
}
