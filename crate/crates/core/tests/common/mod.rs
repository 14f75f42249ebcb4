#![allow(dead_code, non_snake_case)]

use pdilqr::lqr::random::{gaussian_vector, random_lqr, rng, InstanceRng};
use pdilqr::nlp::{Iterate, OcpProblem};
use pdilqr::problems::{make_problem, BuiltinProblem, LqrProblem, ProblemSpec, REGISTRY};
use rand::Rng;

pub fn builtin(name: &str) -> BuiltinProblem {
    make_problem(&ProblemSpec::defaults(name).unwrap()).unwrap()
}

pub fn short_builtin(name: &str, horizon: usize) -> BuiltinProblem {
    make_problem(&ProblemSpec { horizon, ..ProblemSpec::defaults(name).unwrap() }).unwrap()
}

/// Every registered problem at a short horizon, plus a random LQR posed as an NLP.
pub fn test_problems(seed: u64) -> Vec<(String, Box<dyn OcpProblem>)> {
    let mut out: Vec<(String, Box<dyn OcpProblem>)> =
        REGISTRY.iter().map(|&n| (n.to_string(), Box::new(short_builtin(n, 20)) as Box<dyn OcpProblem>)).collect();
    out.push(("random_lqr".into(), Box::new(LqrProblem::new(random_lqr(&mut rng(seed), 10, 3, 2)))));
    out
}

/// Gaussian states, controls and multipliers; states are generally infeasible.
pub fn random_iterate(problem: &dyn OcpProblem, r: &mut InstanceRng) -> Iterate {
    let (N, n, m) = (problem.horizon(), problem.state_dim(), problem.control_dim());
    Iterate {
        x: (0..=N).map(|_| gaussian_vector(r, n, 1.0)).collect(),
        u: (0..N).map(|_| gaussian_vector(r, m, 1.0)).collect(),
        lambda: (0..=N).map(|_| gaussian_vector(r, n, 1.0)).collect(),
    }
}

/// Random controls and multipliers with states rolled out from the initial state,
/// so every constraint residual is exactly zero.
pub fn feasible_iterate(problem: &dyn OcpProblem, r: &mut InstanceRng) -> Iterate {
    let mut it = random_iterate(problem, r);
    it.x[0] = problem.initial_state();
    for i in 0..problem.horizon() {
        it.x[i + 1] = problem.dynamics(i, &it.x[i], &it.u[i]);
    }
    it
}

pub fn uniform(r: &mut InstanceRng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}
