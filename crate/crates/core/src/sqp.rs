//! The outer SQP iteration: subproblem solve, penalty choice, Armijo
//! backtracking, per-stage regularization and convergence testing.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqr::{self, LqrBackend, LqrError, LqrSolution};
use crate::nlp::{
    inf_norm, merit, merit_directional_derivative, squared_norm, stage_curvatures, step_curvature, HessianBlocks,
    HessianMode, Iterate, Linearization, NlpError, OcpProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// `rho = 2 |dlambda| / |d|` from scratch every iteration.
    #[default]
    Recompute,
    /// `rho` never decreases; when the current value fails to give descent it
    /// is raised to twice the smallest value that would.
    #[serde(alias = "npsqp")]
    NpsqpMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Bound on `max(|dx|inf, |du|inf, |dlambda|inf)`.
    pub tol_step: f64,
    /// Bound on `|d|inf`.
    pub tol_feas: f64,
    pub armijo_factor: f64,
    pub backtrack_factor: f64,
    pub max_linesearch_steps: usize,
    /// Below this `|d|` the penalty falls back to `default_rho`.
    pub d_small: f64,
    pub default_rho: f64,
    pub mu_init: f64,
    pub reg_factor: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Replace eigenvalues of each Hessian block below `eigen_floor` before the `mu` shift.
    pub eigen_clamp: bool,
    pub eigen_floor: f64,
    pub penalty_mode: PenaltyMode,
    pub hessian_mode: HessianMode,
    pub lqr_backend: LqrBackend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            tol_step: 1e-8,
            tol_feas: 1e-8,
            armijo_factor: 1e-4,
            backtrack_factor: 0.5,
            max_linesearch_steps: 20,
            d_small: 1e-12,
            default_rho: 0.01,
            mu_init: 0.0,
            reg_factor: 10.0,
            mu_min: 1e-8,
            mu_max: 1e8,
            eigen_clamp: false,
            eigen_floor: 1e-8,
            penalty_mode: PenaltyMode::Recompute,
            hessian_mode: HessianMode::GaussNewton,
            lqr_backend: LqrBackend::Sequential,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqpError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error(transparent)]
    Iterate(#[from] NlpError),
}

impl SolverConfig {
    /// Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SqpError> {
        let bad = |msg: &str| Err(SqpError::Config(msg.into()));
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return bad("armijo_factor must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.reg_factor > 1.0) {
            return bad("reg_factor must exceed 1");
        }
        if !(self.mu_min >= 0.0 && self.mu_min <= self.mu_max) {
            return bad("need 0 <= mu_min <= mu_max");
        }
        if !(self.mu_init >= 0.0) {
            return bad("mu_init must be non-negative");
        }
        if !(self.tol_step >= 0.0 && self.tol_feas >= 0.0 && self.d_small >= 0.0 && self.default_rho >= 0.0) {
            return bad("tolerances, d_small and default_rho must be non-negative");
        }
        if !(self.eigen_floor > 0.0) {
            return bad("eigen_floor must be positive");
        }
        Ok(())
    }
}

/// One completed outer iteration. Values describe the iterate the step was
/// taken from, plus the accepted step length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based.
    pub iteration: usize,
    pub objective: f64,
    /// `|d|^2`.
    pub c_norm_sq: f64,
    /// Merit directional derivative along the step.
    pub merit_derivative: f64,
    pub alpha: f64,
    pub rho: f64,
    pub max_mu: f64,
    /// Merit evaluations spent in the line search.
    pub linesearch_steps: usize,
    /// Merit at the iterate, when evaluated.
    pub merit: Option<f64>,
    /// Merit at the accepted point, when evaluated. Rows with zero
    /// `linesearch_steps` were accepted without comparing it.
    pub merit_trial: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    RegularizationFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub iterate: Iterate,
    pub status: SolveStatus,
    pub trace: SolverTrace,
}

/// `rho = 2 |dlambda| / |d|` when `|d| > d_small`, else `default_rho`.
pub fn penalty_update(delta_lambda: &[DVector<f64>], d: &[DVector<f64>], config: &SolverConfig) -> f64 {
    let d_norm = squared_norm(d).sqrt();
    if d_norm > config.d_small {
        2.0 * squared_norm(delta_lambda).sqrt() / d_norm
    } else {
        config.default_rho
    }
}

/// Monotone variant: keeps `rho_prev` while it yields descent, otherwise
/// returns twice the threshold `(2 d'dlambda - dp'Q dp) / |d|^2`.
pub fn monotone_penalty_update(
    rho_prev: f64,
    step: &LqrSolution,
    blocks: &HessianBlocks,
    d: &[DVector<f64>],
    config: &SolverConfig,
) -> f64 {
    let d_sq = squared_norm(d);
    if d_sq.sqrt() <= config.d_small {
        return rho_prev;
    }
    if merit_directional_derivative(step, blocks, d, rho_prev) < 0.0 {
        return rho_prev;
    }
    let cross: f64 = d.iter().zip(&step.lambda).map(|(a, b)| a.dot(b)).sum();
    let rho_min = (2.0 * cross - step_curvature(step, blocks)) / d_sq;
    if rho_min > 0.0 {
        (2.0 * rho_min).max(rho_prev)
    } else {
        rho_prev.max(config.default_rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizationEvent {
    FactorizationFailed,
    FactorizationSucceeded,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("regularization would exceed mu_max ({mu_max})")]
pub struct RegularizationLimit {
    pub mu_max: f64,
}

/// Failure: `max(mu_min, mu) * r`, refused beyond `mu_max`.
/// Success: `mu / r`, set to zero once below `mu_min`.
pub fn regularization_update(
    mu: f64,
    event: RegularizationEvent,
    config: &SolverConfig,
) -> Result<f64, RegularizationLimit> {
    match event {
        RegularizationEvent::FactorizationFailed => {
            let next = mu.max(config.mu_min) * config.reg_factor;
            if next > config.mu_max {
                Err(RegularizationLimit { mu_max: config.mu_max })
            } else {
                Ok(next)
            }
        }
        RegularizationEvent::FactorizationSucceeded => {
            let next = mu / config.reg_factor;
            Ok(if next < config.mu_min { 0.0 } else { next })
        }
    }
}

/// Inclusive infinity-norm tests on the step and the residual.
pub fn check_convergence(step: &LqrSolution, d: &[DVector<f64>], config: &SolverConfig) -> bool {
    let step_size = inf_norm(&step.x).max(inf_norm(&step.u)).max(inf_norm(&step.lambda));
    step_size <= config.tol_step && inf_norm(d) <= config.tol_feas
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub iterate: Iterate,
    /// Number of trial points whose merit was evaluated.
    pub evaluations: usize,
    pub merit_before: Option<f64>,
    /// Merit at the accepted point, when evaluated.
    pub merit_after: Option<f64>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("no step length satisfied the Armijo condition after {evaluations} trials")]
pub struct LineSearchFailure {
    pub evaluations: usize,
}

/// Relative size below which a predicted merit change `k alpha D` cannot be
/// told apart from rounding in the merit value itself.
pub const MERIT_RESOLUTION: f64 = 100.0 * f64::EPSILON;

/// Backtracking search for the largest `alpha` in `{1, b, b^2, ...}` with
/// `m(z + alpha dz) < m(z) + k alpha D`.
///
/// Full steps are taken without a search in two cases: the step moves only the
/// multipliers at a feasible point (no merit evaluations at all), or `|D|` is
/// below [`MERIT_RESOLUTION`] relative to `m(z)`, where no comparison of merit
/// values is meaningful. Both report zero trial evaluations; the second still
/// records the merit at the new point.
pub fn line_search(
    problem: &dyn OcpProblem,
    iterate: &Iterate,
    step: &LqrSolution,
    d: &[DVector<f64>],
    rho: f64,
    directional_derivative: f64,
    config: &SolverConfig,
) -> Result<LineSearchOutcome, LineSearchFailure> {
    let primal_zero = inf_norm(&step.x) == 0.0 && inf_norm(&step.u) == 0.0;
    if primal_zero && inf_norm(d) == 0.0 && inf_norm(&step.lambda) > 0.0 {
        return Ok(LineSearchOutcome {
            alpha: 1.0,
            iterate: iterate.stepped(step, 1.0),
            evaluations: 0,
            merit_before: None,
            merit_after: None,
        });
    }
    let m0 = merit(problem, iterate, rho);
    if directional_derivative <= 0.0 && -directional_derivative <= MERIT_RESOLUTION * m0.abs().max(1.0) {
        // Recorded for diagnostics only; the step is taken regardless.
        let candidate = iterate.stepped(step, 1.0);
        let m = merit(problem, &candidate, rho);
        return Ok(LineSearchOutcome {
            alpha: 1.0,
            iterate: candidate,
            evaluations: 0,
            merit_before: Some(m0),
            merit_after: Some(m),
        });
    }
    let mut alpha = 1.0;
    for trial in 1..=config.max_linesearch_steps {
        let candidate = iterate.stepped(step, alpha);
        let m = merit(problem, &candidate, rho);
        if m < m0 + config.armijo_factor * alpha * directional_derivative {
            return Ok(LineSearchOutcome {
                alpha,
                iterate: candidate,
                evaluations: trial,
                merit_before: Some(m0),
                merit_after: Some(m),
            });
        }
        alpha *= config.backtrack_factor;
    }
    Err(LineSearchFailure { evaluations: config.max_linesearch_steps })
}

/// Regularized Hessian blocks and the LQR step they produce.
struct Subproblem {
    blocks: HessianBlocks,
    step: LqrSolution,
}

/// Raises `mu` until the LQR factorizations succeed and the step has positive
/// curvature `dp' Q dp`, which makes the merit derivative negative. Blocks may
/// stay indefinite as long as the subproblem is convex along the step.
/// Marks the stages that needed it in `bumped`.
fn solve_subproblem(
    lin: &Linearization,
    mu: &mut [f64],
    bumped: &mut [bool],
    config: &SolverConfig,
) -> Result<Subproblem, RegularizationLimit> {
    let floor = config.eigen_clamp.then_some(config.eigen_floor);
    loop {
        let blocks = lin.hessians.regularized(mu, floor);
        let failed: Vec<usize> = match lqr::solve(&lin.lqr_subproblem(&blocks), config.lqr_backend) {
            Ok(step) => {
                let curv = stage_curvatures(&step, &blocks);
                let total: f64 = curv.iter().sum();
                let moves = inf_norm(&step.x) > 0.0 || inf_norm(&step.u) > 0.0;
                if total > 0.0 || (!moves && total == 0.0) {
                    return Ok(Subproblem { blocks, step });
                }
                let negative: Vec<usize> = (0..curv.len()).filter(|&i| curv[i] < 0.0 || curv[i].is_nan()).collect();
                if negative.is_empty() {
                    (0..mu.len()).collect()
                } else {
                    negative
                }
            }
            Err(LqrError::NotPositiveDefinite { stage }) => vec![stage],
            Err(_) => (0..mu.len()).collect(),
        };
        for i in failed {
            mu[i] = regularization_update(mu[i], RegularizationEvent::FactorizationFailed, config)?;
            bumped[i] = true;
        }
    }
}

/// Runs SQP from `init` until convergence, the iteration limit, or a failure.
///
/// Each pass linearizes at the current iterate and solves the LQR subproblem.
/// If that step already meets both tolerances the solve stops with the current
/// iterate; the check at the iterate reached after `max_iterations` steps
/// decides between `Converged` and `MaxIterations`. Otherwise the penalty is
/// chosen, a step length is found and one trace record is written.
pub fn solve(problem: &dyn OcpProblem, init: Iterate, config: &SolverConfig) -> Result<SolveResult, SqpError> {
    config.validate()?;
    init.validate(problem)?;
    let n_blocks = problem.horizon() + 1;
    let mut mu = vec![config.mu_init; n_blocks];
    let mut rho = config.default_rho;
    let mut z = init;
    let mut trace = SolverTrace::default();

    let finish = |iterate, status, trace| Ok(SolveResult { iterate, status, trace });

    for k in 0..=config.max_iterations {
        let lin = Linearization::new(problem, &z, config.hessian_mode);
        let mut bumped = vec![false; n_blocks];
        let Ok(sub) = solve_subproblem(&lin, &mut mu, &mut bumped, config) else {
            return finish(z, SolveStatus::RegularizationFailure, trace);
        };
        if check_convergence(&sub.step, &lin.residuals, config) {
            return finish(z, SolveStatus::Converged, trace);
        }
        if k == config.max_iterations {
            break;
        }

        rho = match config.penalty_mode {
            PenaltyMode::Recompute => penalty_update(&sub.step.lambda, &lin.residuals, config),
            PenaltyMode::NpsqpMonotone => monotone_penalty_update(rho, &sub.step, &sub.blocks, &lin.residuals, config),
        };
        let derivative = merit_directional_derivative(&sub.step, &sub.blocks, &lin.residuals, rho);
        let outcome = match line_search(problem, &z, &sub.step, &lin.residuals, rho, derivative, config) {
            Ok(o) => o,
            Err(_) => return finish(z, SolveStatus::LineSearchFailure, trace),
        };

        trace.records.push(TraceRecord {
            iteration: k + 1,
            objective: lin.objective,
            c_norm_sq: squared_norm(&lin.residuals),
            merit_derivative: derivative,
            alpha: outcome.alpha,
            rho,
            max_mu: mu.iter().copied().fold(0.0, f64::max),
            linesearch_steps: outcome.evaluations,
            merit: outcome.merit_before,
            merit_trial: outcome.merit_after,
        });
        z = outcome.iterate;

        for (m, &b) in mu.iter_mut().zip(&bumped) {
            if !b {
                // Decay never fails.
                *m = regularization_update(*m, RegularizationEvent::FactorizationSucceeded, config).unwrap_or(0.0);
            }
        }
    }
    finish(z, SolveStatus::MaxIterations, trace)
}
