//! Randomized cross-checks of the LQR back-ends against the dense KKT oracle and
//! against each other, plus associativity of the scan operators.

#![allow(non_snake_case)]

use pdilqr::lqr::random::{gaussian_matrix, gaussian_vector, random_lqr, rng};
use pdilqr::lqr::{
    self, combine_affine, combine_value, dense_kkt_solve, dual_backward, dual_direct, make_leaf_elements,
    relative_error, relative_error_mat, riccati_backward, riccati_forward, AffineMap, LqrBackend, LqrData, LqrError,
    LqrSolution, ValueElement,
};
use rand::Rng;
use serde::Serialize;

/// Solutions of the oracle-sized instances agree to this relative error.
pub const SOLUTION_TOL: f64 = 1e-8;
pub const ASSOCIATIVITY_TOL: f64 = 1e-9;

pub const SHORT_HORIZON: usize = 8;
pub const LONG_HORIZON: usize = 64;
pub const STATE_DIM: usize = 3;
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: String,
    pub error: f64,
    pub tol: f64,
}

impl Comparison {
    fn new(name: impl Into<String>, error: f64, tol: f64) -> Self {
        Comparison { name: name.into(), error, tol }
    }

    pub fn passed(&self) -> bool {
        self.error <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub seed: u64,
    pub comparisons: Vec<Comparison>,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(Comparison::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| !c.passed())
    }
}

/// Seed of instance `index` in a run started from `seed`; rerunning with this
/// seed and one instance reproduces it.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// The oracle-sized instance for `seed`.
pub fn short_instance(seed: u64) -> LqrData {
    random_lqr(&mut rng(seed), SHORT_HORIZON, STATE_DIM, CONTROL_DIM)
}

pub fn long_instance(seed: u64) -> LqrData {
    random_lqr(&mut rng(seed ^ 0x9e37_79b9_7f4a_7c15), LONG_HORIZON, STATE_DIM, CONTROL_DIM)
}

fn solution_errors(name: &str, a: &LqrSolution, b: &LqrSolution, tol: f64) -> Vec<Comparison> {
    vec![
        Comparison::new(format!("{name}.x"), relative_error(&a.x, &b.x), tol),
        Comparison::new(format!("{name}.u"), relative_error(&a.u, &b.u), tol),
        Comparison::new(format!("{name}.lambda"), relative_error(&a.lambda, &b.lambda), tol),
    ]
}

fn compare_solves(
    name: &str,
    a: Result<LqrSolution, LqrError>,
    b: Result<LqrSolution, LqrError>,
    tol: f64,
) -> Vec<Comparison> {
    match (a, b) {
        (Ok(a), Ok(b)) => solution_errors(name, &a, &b, tol),
        _ => vec![Comparison::new(name, f64::INFINITY, tol)],
    }
}

/// Sequential pipeline vs dense KKT solve.
pub fn oracle_comparisons(data: &LqrData, tol: f64) -> Vec<Comparison> {
    compare_solves("sequential_vs_dense_kkt", lqr::solve(data, LqrBackend::Sequential), dense_kkt_solve(data), tol)
}

/// Parallel back-end vs sequential pipeline.
pub fn backend_comparisons(data: &LqrData, tol: f64, label: &str) -> Vec<Comparison> {
    compare_solves(
        &format!("parallel_vs_sequential_{label}"),
        lqr::solve(data, LqrBackend::Parallel),
        lqr::solve(data, LqrBackend::Sequential),
        tol,
    )
}

/// Both multiplier formulas against each other and the oracle multipliers.
pub fn dual_comparisons(data: &LqrData, tol: f64) -> Vec<Comparison> {
    let (Ok(gains), Ok(oracle)) = (riccati_backward(data), dense_kkt_solve(data)) else {
        return vec![Comparison::new("dual_recovery", f64::INFINITY, tol)];
    };
    let (x, u) = riccati_forward(data, &gains);
    let backward = dual_backward(data, &x, &u);
    let direct = dual_direct(&x, &gains);
    vec![
        Comparison::new("dual_backward_vs_dual_direct", relative_error(&backward, &direct), tol),
        Comparison::new("dual_backward_vs_dense_kkt", relative_error(&backward, &oracle.lambda), tol),
        Comparison::new("dual_direct_vs_dense_kkt", relative_error(&direct, &oracle.lambda), tol),
    ]
}

pub fn value_error(a: &ValueElement, b: &ValueElement) -> f64 {
    let v = |x: &nalgebra::DVector<f64>| nalgebra::DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    [
        relative_error_mat(&a.P, &b.P),
        relative_error_mat(&v(&a.p), &v(&b.p)),
        relative_error_mat(&a.A, &b.A),
        relative_error_mat(&a.C, &b.C),
        relative_error_mat(&v(&a.c), &v(&b.c)),
    ]
    .into_iter()
    .fold(0.0, |acc, e| if e.is_nan() { f64::INFINITY } else { acc.max(e) })
}

/// Three consecutive single-stage value functions of a random two-stage problem
/// (two stages and the terminal element) form a consistent triple.
pub fn value_triple(seed: u64) -> [ValueElement; 3] {
    let mut r = rng(seed ^ 0x5bd1_e995);
    let n = r.random_range(1..=4);
    let m = r.random_range(1..=3);
    let leaves = make_leaf_elements(&random_lqr(&mut r, 2, n, m)).expect("random stages have R > 0");
    let [a, b, c]: [ValueElement; 3] = leaves.try_into().expect("two stages plus terminal");
    [a, b, c]
}

pub fn affine_triple(seed: u64) -> [AffineMap; 3] {
    let mut r = rng(seed ^ 0xc2b2_ae35);
    let n = r.random_range(1..=5);
    let mut map = || AffineMap { offset: gaussian_vector(&mut r, n, 1.0), linear: gaussian_matrix(&mut r, n, n, 1.0) };
    [map(), map(), map()]
}

pub fn associativity_comparisons(seed: u64, tol: f64) -> Vec<Comparison> {
    let [a, b, c] = value_triple(seed);
    let value = (|| -> Result<f64, LqrError> {
        let left = combine_value(&combine_value(&a, &b)?, &c)?;
        let right = combine_value(&a, &combine_value(&b, &c)?)?;
        Ok(value_error(&left, &right))
    })()
    .unwrap_or(f64::INFINITY);

    let [a, b, c] = affine_triple(seed);
    let left = combine_affine(&combine_affine(&a, &b), &c);
    let right = combine_affine(&a, &combine_affine(&b, &c));
    let v = |x: &nalgebra::DVector<f64>| nalgebra::DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let affine =
        relative_error_mat(&left.linear, &right.linear).max(relative_error_mat(&v(&left.offset), &v(&right.offset)));
    vec![
        Comparison::new("combine_value_associativity", value, tol),
        Comparison::new("combine_affine_associativity", affine, tol),
    ]
}

/// Every comparison for one seed. `tol_override` replaces all pinned tolerances.
pub fn check_instance(seed: u64, tol_override: Option<f64>) -> InstanceReport {
    let sol_tol = tol_override.unwrap_or(SOLUTION_TOL);
    let assoc_tol = tol_override.unwrap_or(ASSOCIATIVITY_TOL);
    let short = short_instance(seed);
    let mut comparisons = oracle_comparisons(&short, sol_tol);
    comparisons.extend(backend_comparisons(&short, sol_tol, "short"));
    comparisons.extend(backend_comparisons(&long_instance(seed), sol_tol, "long"));
    comparisons.extend(dual_comparisons(&short, sol_tol));
    comparisons.extend(associativity_comparisons(seed, assoc_tol));
    InstanceReport { seed, comparisons }
}
