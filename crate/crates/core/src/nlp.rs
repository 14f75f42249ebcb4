//! Optimal control problems and the SQP quantities derived from them.
//!
//! The transcription is direct multiple shooting: the decision vector stacks
//! `(x_0, u_0, ..., x_{N-1}, u_{N-1}, x_N)` and the constraints are
//!
//! ```text
//! d_0     = s_0 - x_0
//! d_{i+1} = f_i(x_i, u_i) - x_{i+1}
//! ```
//!
//! with multipliers `lambda_0..lambda_N`. The Lagrangian is
//! `sum_i g_i(x_i, u_i) + g_N(x_N) + sum_i lambda_i' d_i`, and the Newton-KKT
//! step on it is an LQR problem ([`build_lqr_subproblem`]).
//!
//! Every per-stage evaluation is independent of the others, so stages are
//! evaluated concurrently; problem evaluators must therefore be pure.

#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqr::{LqrData, LqrSolution, LqrStage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("iterate {field} has {found} entries, expected {expected}")]
    Length { field: &'static str, expected: usize, found: usize },
    #[error("iterate {field}[{index}] has dimension {found}, expected {expected}")]
    Dimension { field: &'static str, index: usize, expected: usize, found: usize },
}

/// An unconstrained discrete-time optimal control problem
///
/// ```text
/// min  sum_{i<N} g_i(x_i, u_i) + g_N(x_N)
/// s.t. x_0 = s_0,  x_{i+1} = f_i(x_i, u_i)
/// ```
///
/// Gradients and Hessians of stage costs are taken with respect to the stacked
/// vector `(x, u)`. Implementations must be deterministic and safe to call from
/// several threads at once.
pub trait OcpProblem: Sync {
    fn horizon(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn initial_state(&self) -> DVector<f64>;

    fn stage_cost(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    /// Gradient of `g_i` with respect to `(x, u)`, length `n + m`.
    fn stage_cost_gradient(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// Hessian of `g_i` with respect to `(x, u)`, `(n + m) x (n + m)`.
    fn stage_cost_hessian(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    fn terminal_cost(&self, x: &DVector<f64>) -> f64;
    fn terminal_cost_gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn terminal_cost_hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn dynamics(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `(A, B) = (df/dx, df/du)`.
    fn dynamics_jacobians(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);

    /// Hessian of `lambda' f_i` with respect to `(x, u)`. Problems that return
    /// `None` are always solved with Gauss-Newton Hessians.
    fn dynamics_hessian_contraction(
        &self,
        _stage: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _lambda: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        None
    }
}

/// How the Lagrangian Hessian is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Cost Hessians only (drops the dynamics curvature term).
    #[default]
    GaussNewton,
    /// Cost Hessians plus `sum_a lambda_{i+1,a} * Hess f_{i,a}` when the problem provides it.
    Exact,
}

/// Primal-dual iterate: states `x_0..x_N`, controls `u_0..u_{N-1}` and
/// dynamics multipliers `lambda_0..lambda_N`. States need not be dynamically
/// consistent with the controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    #[serde(with = "crate::lqr::serde_vectors")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "crate::lqr::serde_vectors")]
    pub u: Vec<DVector<f64>>,
    #[serde(with = "crate::lqr::serde_vectors")]
    pub lambda: Vec<DVector<f64>>,
}

impl Iterate {
    /// States and controls as given, multipliers zero.
    pub fn new(x: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Self {
        let n = x.first().map_or(0, |v| v.len());
        let lambda = vec![DVector::zeros(n); x.len()];
        Self { x, u, lambda }
    }

    pub fn zeros(problem: &dyn OcpProblem) -> Self {
        let (N, n, m) = (problem.horizon(), problem.state_dim(), problem.control_dim());
        Self::new(vec![DVector::zeros(n); N + 1], vec![DVector::zeros(m); N])
    }

    pub fn validate(&self, problem: &dyn OcpProblem) -> Result<(), NlpError> {
        let (N, n, m) = (problem.horizon(), problem.state_dim(), problem.control_dim());
        check_block("x", &self.x, N + 1, n)?;
        check_block("u", &self.u, N, m)?;
        check_block("lambda", &self.lambda, N + 1, n)
    }

    /// `self + alpha * step`, where `step` holds `(dx, du, dlambda)`.
    pub fn stepped(&self, step: &LqrSolution, alpha: f64) -> Self {
        let axpy = |a: &[DVector<f64>], b: &[DVector<f64>]| -> Vec<DVector<f64>> {
            a.iter().zip(b).map(|(ai, bi)| ai + bi * alpha).collect()
        };
        Self { x: axpy(&self.x, &step.x), u: axpy(&self.u, &step.u), lambda: axpy(&self.lambda, &step.lambda) }
    }
}

fn check_block(field: &'static str, vs: &[DVector<f64>], len: usize, dim: usize) -> Result<(), NlpError> {
    if vs.len() != len {
        return Err(NlpError::Length { field, expected: len, found: vs.len() });
    }
    if let Some((index, v)) = vs.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(NlpError::Dimension { field, index, expected: dim, found: v.len() });
    }
    Ok(())
}

/// Stagewise Lagrangian gradient: `stages[i]` has length `n + m`, `terminal` length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianGradient {
    pub stages: Vec<DVector<f64>>,
    pub terminal: DVector<f64>,
}

/// Block diagonal Hessian approximation: `(n+m)`-square stage blocks and an
/// `n`-square terminal block.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    pub stages: Vec<DMatrix<f64>>,
    pub terminal: DMatrix<f64>,
}

impl HessianBlocks {
    /// Block `i` for `i < N`, the terminal block for `i == N`.
    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        self.stages.get(i).unwrap_or(&self.terminal)
    }

    pub fn len(&self) -> usize {
        self.stages.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Optionally clamps eigenvalues from below, then adds `mu[i] * I` to block `i`.
    pub fn regularized(&self, mu: &[f64], eigen_floor: Option<f64>) -> Self {
        assert_eq!(mu.len(), self.len(), "one regularizer per block");
        let fix = |block: &DMatrix<f64>, mu_i: f64| {
            let mut b = match eigen_floor {
                Some(floor) => clamp_eigenvalues(block, floor),
                None => block.clone(),
            };
            for j in 0..b.nrows() {
                b[(j, j)] += mu_i;
            }
            b
        };
        let stages = self.stages.par_iter().zip(mu.par_iter()).map(|(b, &m)| fix(b, m)).collect();
        let terminal = fix(&self.terminal, mu[mu.len() - 1]);
        Self { stages, terminal }
    }

    /// First block that fails a Cholesky factorization.
    pub fn first_indefinite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| self.block(i).clone().cholesky().is_none())
    }
}

/// Replaces eigenvalues below `floor` by `floor`.
pub fn clamp_eigenvalues(block: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    if block.is_empty() {
        return block.clone();
    }
    let eig = SymmetricEigen::new(block.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return block.clone();
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Everything the SQP step needs at one iterate, evaluated stage by stage.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub objective: f64,
    pub residuals: Vec<DVector<f64>>,
    pub gradient: LagrangianGradient,
    /// Symmetrized, unregularized Hessian blocks.
    pub hessians: HessianBlocks,
    pub jacobians: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

struct StageEval {
    cost: f64,
    next_state: DVector<f64>,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
    A: DMatrix<f64>,
    B: DMatrix<f64>,
}

impl Linearization {
    pub fn new(problem: &dyn OcpProblem, iterate: &Iterate, mode: HessianMode) -> Self {
        let n = problem.state_dim();
        let N = problem.horizon();
        let evals: Vec<StageEval> = (0..N)
            .into_par_iter()
            .map(|i| {
                let (x, u, lam_next) = (&iterate.x[i], &iterate.u[i], &iterate.lambda[i + 1]);
                let (A, B) = problem.dynamics_jacobians(i, x, u);
                let mut gradient = problem.stage_cost_gradient(i, x, u);
                {
                    let mut gx = gradient.rows_mut(0, n);
                    gx += A.transpose() * lam_next - &iterate.lambda[i];
                }
                {
                    let mut gu = gradient.rows_mut(n, problem.control_dim());
                    gu += B.transpose() * lam_next;
                }
                let mut hessian = problem.stage_cost_hessian(i, x, u);
                if mode == HessianMode::Exact {
                    if let Some(h) = problem.dynamics_hessian_contraction(i, x, u, lam_next) {
                        hessian += h;
                    }
                }
                symmetrize(&mut hessian);
                StageEval {
                    cost: problem.stage_cost(i, x, u),
                    next_state: problem.dynamics(i, x, u),
                    gradient,
                    hessian,
                    A,
                    B,
                }
            })
            .collect();

        let xN = &iterate.x[N];
        let mut terminal_hessian = problem.terminal_cost_hessian(xN);
        symmetrize(&mut terminal_hessian);

        let mut residuals = Vec::with_capacity(N + 1);
        residuals.push(problem.initial_state() - &iterate.x[0]);
        residuals.extend(evals.iter().enumerate().map(|(i, e)| &e.next_state - &iterate.x[i + 1]));

        let objective = evals.iter().map(|e| e.cost).sum::<f64>() + problem.terminal_cost(xN);
        let mut stages_grad = Vec::with_capacity(N);
        let mut stages_hess = Vec::with_capacity(N);
        let mut jacobians = Vec::with_capacity(N);
        for e in evals {
            stages_grad.push(e.gradient);
            stages_hess.push(e.hessian);
            jacobians.push((e.A, e.B));
        }
        Self {
            objective,
            residuals,
            gradient: LagrangianGradient {
                stages: stages_grad,
                terminal: problem.terminal_cost_gradient(xN) - &iterate.lambda[N],
            },
            hessians: HessianBlocks { stages: stages_hess, terminal: terminal_hessian },
            jacobians,
        }
    }

    /// The Newton-KKT system at this point as an LQR problem in `(dx, du, dlambda)`.
    pub fn lqr_subproblem(&self, blocks: &HessianBlocks) -> LqrData {
        assemble_lqr(&self.jacobians, blocks, &self.residuals, &self.gradient)
    }
}

fn assemble_lqr(
    jacobians: &[(DMatrix<f64>, DMatrix<f64>)],
    blocks: &HessianBlocks,
    d: &[DVector<f64>],
    l: &LagrangianGradient,
) -> LqrData {
    let n = blocks.terminal.nrows();
    let stages = jacobians
        .iter()
        .enumerate()
        .map(|(i, (A, B))| {
            let blk = &blocks.stages[i];
            let m = blk.nrows() - n;
            LqrStage {
                Q: blk.view((0, 0), (n, n)).into_owned(),
                R: blk.view((n, n), (m, m)).into_owned(),
                M: blk.view((0, n), (n, m)).into_owned(),
                q: l.stages[i].rows(0, n).into_owned(),
                r: l.stages[i].rows(n, m).into_owned(),
                A: A.clone(),
                B: B.clone(),
                c: d[i + 1].clone(),
            }
        })
        .collect();
    LqrData { stages, Q_N: blocks.terminal.clone(), q_N: l.terminal.clone(), s_0: d[0].clone() }
}

/// `d_0 = s_0 - x_0`, `d_{i+1} = f_i(x_i, u_i) - x_{i+1}`.
pub fn constraint_residuals(problem: &dyn OcpProblem, iterate: &Iterate) -> Vec<DVector<f64>> {
    let N = problem.horizon();
    let mut d = Vec::with_capacity(N + 1);
    d.push(problem.initial_state() - &iterate.x[0]);
    d.par_extend((0..N).into_par_iter().map(|i| problem.dynamics(i, &iterate.x[i], &iterate.u[i]) - &iterate.x[i + 1]));
    d
}

pub fn lagrangian_gradient(problem: &dyn OcpProblem, iterate: &Iterate) -> LagrangianGradient {
    Linearization::new(problem, iterate, HessianMode::GaussNewton).gradient
}

/// Symmetrized Hessian blocks, optionally eigenvalue-clamped, shifted by `mu[i] * I`.
pub fn hessian_blocks(
    problem: &dyn OcpProblem,
    iterate: &Iterate,
    mode: HessianMode,
    mu: &[f64],
    eigen_floor: Option<f64>,
) -> HessianBlocks {
    Linearization::new(problem, iterate, mode).hessians.regularized(mu, eigen_floor)
}

/// Maps the Newton-KKT system onto LQR data: cost blocks from `blocks`, linear
/// terms from `l`, dynamics Jacobians at `iterate`, offsets `c_i = d_{i+1}` and
/// initial state `d_0`.
pub fn build_lqr_subproblem(
    problem: &dyn OcpProblem,
    iterate: &Iterate,
    blocks: &HessianBlocks,
    d: &[DVector<f64>],
    l: &LagrangianGradient,
) -> LqrData {
    let jacobians: Vec<_> = (0..problem.horizon())
        .into_par_iter()
        .map(|i| problem.dynamics_jacobians(i, &iterate.x[i], &iterate.u[i]))
        .collect();
    assemble_lqr(&jacobians, blocks, d, l)
}

pub fn objective(problem: &dyn OcpProblem, iterate: &Iterate) -> f64 {
    let N = problem.horizon();
    let stage: Vec<f64> = (0..N).into_par_iter().map(|i| problem.stage_cost(i, &iterate.x[i], &iterate.u[i])).collect();
    stage.iter().sum::<f64>() + problem.terminal_cost(&iterate.x[N])
}

/// Objective, constraint residuals and merit value at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritEval {
    pub objective: f64,
    pub residual_norm_sq: f64,
    pub lagrangian: f64,
    pub merit: f64,
}

pub fn merit_eval(problem: &dyn OcpProblem, iterate: &Iterate, rho: f64) -> MeritEval {
    assert!(rho >= 0.0, "penalty parameter must be non-negative");
    let obj = objective(problem, iterate);
    let d = constraint_residuals(problem, iterate);
    let lambda_d: f64 = d.iter().zip(&iterate.lambda).map(|(di, li)| li.dot(di)).sum();
    let residual_norm_sq = squared_norm(&d);
    let lagrangian = obj + lambda_d;
    MeritEval { objective: obj, residual_norm_sq, lagrangian, merit: lagrangian + 0.5 * rho * residual_norm_sq }
}

/// `L(x, lambda) = objective + sum_i lambda_i' d_i`.
pub fn lagrangian(problem: &dyn OcpProblem, iterate: &Iterate) -> f64 {
    merit_eval(problem, iterate, 0.0).lagrangian
}

/// `m_rho = L(x, lambda) + rho/2 ||d||^2`.
pub fn merit(problem: &dyn OcpProblem, iterate: &Iterate, rho: f64) -> f64 {
    merit_eval(problem, iterate, rho).merit
}

/// Closed-form directional derivative of the merit function along a Newton
/// step: `-dp' Q dp + 2 d' dlambda - rho ||d||^2`.
pub fn merit_directional_derivative(step: &LqrSolution, blocks: &HessianBlocks, d: &[DVector<f64>], rho: f64) -> f64 {
    let curvature = step_curvature(step, blocks);
    let d_dot_dlambda: f64 = d.iter().zip(&step.lambda).map(|(a, b)| a.dot(b)).sum();
    -curvature + 2.0 * d_dot_dlambda - rho * squared_norm(d)
}

/// `dp' Q dp` summed over the stage blocks.
pub fn step_curvature(step: &LqrSolution, blocks: &HessianBlocks) -> f64 {
    stage_curvatures(step, blocks).iter().sum()
}

/// `dp_i' Q_i dp_i` for each block, terminal last.
pub fn stage_curvatures(step: &LqrSolution, blocks: &HessianBlocks) -> Vec<f64> {
    let mut out: Vec<f64> = step
        .u
        .par_iter()
        .enumerate()
        .map(|(i, du)| {
            let dp = DVector::from_iterator(step.x[i].len() + du.len(), step.x[i].iter().chain(du.iter()).copied());
            dp.dot(&(&blocks.stages[i] * &dp))
        })
        .collect();
    let dxN = &step.x[step.u.len()];
    out.push(dxN.dot(&(&blocks.terminal * dxN)));
    out
}

pub fn squared_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.norm_squared()).sum()
}

pub fn inf_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.amax()).fold(0.0, f64::max)
}
