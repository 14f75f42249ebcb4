#![allow(non_snake_case)]

//! Built-in benchmark problems and a finite-difference derivative checker.

mod check;
mod dynamics;
mod lqr_problem;

pub use check::{derivative_check, lagrangian_check, DerivativeReport, EvaluatorReport};
pub use dynamics::{CartPole, ContinuousModel, Discretized, DoubleIntegrator, Integrator, Pendulum};
pub use lqr_problem::LqrProblem;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::{Iterate, OcpProblem};

/// Names accepted by [`make_problem`].
pub const REGISTRY: [&str; 3] = ["double_integrator", "pendulum_swingup", "cartpole_swingup"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{name}` (available: {})", REGISTRY.join(", "))]
    Unknown { name: String },
    #[error("invalid problem spec: {0}")]
    Invalid(String),
}

/// Physical constants in SI units. Each model reads only the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Pendulum bob mass, kg.
    pub mass: f64,
    /// Pendulum or pole length, m.
    pub length: f64,
    /// m/s^2.
    pub gravity: f64,
    /// Viscous joint damping, N m s.
    pub damping: f64,
    /// kg.
    pub cart_mass: f64,
    /// kg.
    pub pole_mass: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams { mass: 1.0, length: 1.0, gravity: 9.81, damping: 0.1, cart_mass: 1.0, pole_mass: 0.3 }
    }
}

/// Fully resolved description of a built-in problem.
///
/// Costs are `1/2 (x - goal)' diag(state_weights) (x - goal) + 1/2 u' diag(control_weights) u`
/// per stage and `1/2 (x - goal)' diag(terminal_weights) (x - goal)` at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub horizon: usize,
    pub dt: f64,
    pub integrator: Integrator,
    pub params: PhysicalParams,
    pub state_weights: Vec<f64>,
    pub control_weights: Vec<f64>,
    pub terminal_weights: Vec<f64>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// A problem spec as read from a file: everything but the name may be omitted
/// and falls back to the registered defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialProblemSpec {
    pub name: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub integrator: Option<Integrator>,
    #[serde(default)]
    pub params: Option<PartialParams>,
    #[serde(default)]
    pub state_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub control_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub terminal_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub goal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialParams {
    pub mass: Option<f64>,
    pub length: Option<f64>,
    pub gravity: Option<f64>,
    pub damping: Option<f64>,
    pub cart_mass: Option<f64>,
    pub pole_mass: Option<f64>,
}

impl PartialProblemSpec {
    pub fn resolve(&self) -> Result<ProblemSpec, ProblemError> {
        let mut spec = ProblemSpec::defaults(&self.name)?;
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { spec.$f = v.clone(); } )* };
        }
        take!(horizon, dt, integrator, state_weights, control_weights, terminal_weights, start, goal);
        if let Some(p) = &self.params {
            macro_rules! param {
                ($($f:ident),*) => { $( if let Some(v) = p.$f { spec.params.$f = v; } )* };
            }
            param!(mass, length, gravity, damping, cart_mass, pole_mass);
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl ProblemSpec {
    /// Registered defaults for `name`.
    pub fn defaults(name: &str) -> Result<Self, ProblemError> {
        let params = PhysicalParams::default();
        let spec = match name {
            "double_integrator" => ProblemSpec {
                name: name.into(),
                horizon: 50,
                dt: 0.1,
                integrator: Integrator::Rk4,
                params,
                state_weights: vec![1.0, 1.0],
                control_weights: vec![0.1],
                terminal_weights: vec![10.0, 10.0],
                start: vec![1.0, 0.0],
                goal: vec![0.0, 0.0],
            },
            "pendulum_swingup" => ProblemSpec {
                name: name.into(),
                horizon: 100,
                dt: 0.05,
                integrator: Integrator::Rk4,
                params,
                state_weights: vec![0.1, 0.1],
                control_weights: vec![0.01],
                terminal_weights: vec![100.0, 100.0],
                start: vec![0.0, 0.0],
                goal: vec![PI, 0.0],
            },
            "cartpole_swingup" => ProblemSpec {
                name: name.into(),
                horizon: 100,
                dt: 0.05,
                integrator: Integrator::Rk4,
                params: PhysicalParams { length: 0.5, ..params },
                state_weights: vec![0.1, 1.0, 0.1, 0.1],
                control_weights: vec![0.01],
                terminal_weights: vec![100.0; 4],
                start: vec![0.0; 4],
                goal: vec![0.0, PI, 0.0, 0.0],
            },
            _ => return Err(ProblemError::Unknown { name: name.into() }),
        };
        Ok(spec)
    }

    fn dims(&self) -> Result<(usize, usize), ProblemError> {
        match self.name.as_str() {
            "double_integrator" | "pendulum_swingup" => Ok((2, 1)),
            "cartpole_swingup" => Ok((4, 1)),
            _ => Err(ProblemError::Unknown { name: self.name.clone() }),
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let (n, m) = self.dims()?;
        let bad = |msg: String| Err(ProblemError::Invalid(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, found {}", self.dt));
        }
        for (field, v, len) in [
            ("state_weights", &self.state_weights, n),
            ("control_weights", &self.control_weights, m),
            ("terminal_weights", &self.terminal_weights, n),
            ("start", &self.start, n),
            ("goal", &self.goal, n),
        ] {
            if v.len() != len {
                return bad(format!("{field} has {} entries, expected {len}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{field} contains a non-finite value"));
            }
        }
        if self.state_weights.iter().chain(&self.terminal_weights).any(|&w| w < 0.0) {
            return bad("state and terminal weights must be non-negative".into());
        }
        if self.control_weights.iter().any(|&w| w <= 0.0) {
            return bad("control weights must be positive".into());
        }
        let p = &self.params;
        for (field, v) in
            [("mass", p.mass), ("length", p.length), ("cart_mass", p.cart_mass), ("pole_mass", p.pole_mass)]
        {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("params.{field} must be positive, found {v}"));
            }
        }
        if !(p.gravity.is_finite() && p.damping.is_finite() && p.damping >= 0.0) {
            return bad("params.gravity must be finite and params.damping non-negative".into());
        }
        Ok(())
    }
}

/// A registered model with quadratic tracking costs.
pub struct BuiltinProblem {
    spec: ProblemSpec,
    dynamics: Discretized<Box<dyn ContinuousModel + Send>>,
    Q: DMatrix<f64>,
    R: DMatrix<f64>,
    Q_N: DMatrix<f64>,
    goal: DVector<f64>,
}

pub fn make_problem(spec: &ProblemSpec) -> Result<BuiltinProblem, ProblemError> {
    spec.validate()?;
    let p = spec.params;
    let model: Box<dyn ContinuousModel + Send> = match spec.name.as_str() {
        "double_integrator" => Box::new(DoubleIntegrator),
        "pendulum_swingup" => {
            Box::new(Pendulum { mass: p.mass, length: p.length, gravity: p.gravity, damping: p.damping })
        }
        "cartpole_swingup" => {
            Box::new(CartPole { cart_mass: p.cart_mass, pole_mass: p.pole_mass, length: p.length, gravity: p.gravity })
        }
        other => return Err(ProblemError::Unknown { name: other.into() }),
    };
    let diag = |w: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(w));
    Ok(BuiltinProblem {
        dynamics: Discretized { model, dt: spec.dt, integrator: spec.integrator },
        Q: diag(&spec.state_weights),
        R: diag(&spec.control_weights),
        Q_N: diag(&spec.terminal_weights),
        goal: DVector::from_column_slice(&spec.goal),
        spec: spec.clone(),
    })
}

impl BuiltinProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// `u = 0` with states interpolated linearly from start to goal.
    pub fn cold_start(&self) -> Iterate {
        cold_start(self)
    }
}

/// Zero controls and states on the straight line from `s_0` to the problem's
/// goal, multipliers zero.
pub fn cold_start(problem: &BuiltinProblem) -> Iterate {
    let n_stages = problem.horizon();
    let start = problem.initial_state();
    let x = (0..=n_stages)
        .map(|i| {
            let t = i as f64 / n_stages as f64;
            &start * (1.0 - t) + &problem.goal * t
        })
        .collect();
    let u = vec![DVector::zeros(problem.control_dim()); n_stages];
    Iterate::new(x, u)
}

impl OcpProblem for BuiltinProblem {
    fn horizon(&self) -> usize {
        self.spec.horizon
    }
    fn state_dim(&self) -> usize {
        self.dynamics.model.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.dynamics.model.control_dim()
    }
    fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.spec.start)
    }

    fn stage_cost(&self, _stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let e = x - &self.goal;
        0.5 * (e.dot(&(&self.Q * &e)) + u.dot(&(&self.R * u)))
    }
    fn stage_cost_gradient(&self, _stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let gx = &self.Q * (x - &self.goal);
        let gu = &self.R * u;
        DVector::from_iterator(gx.len() + gu.len(), gx.iter().chain(gu.iter()).copied())
    }
    fn stage_cost_hessian(&self, _stage: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut h = DMatrix::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(&self.Q);
        h.view_mut((n, n), (m, m)).copy_from(&self.R);
        h
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.goal;
        0.5 * e.dot(&(&self.Q_N * &e))
    }
    fn terminal_cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.Q_N * (x - &self.goal)
    }
    fn terminal_cost_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.Q_N.clone()
    }

    fn dynamics(&self, _stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.dynamics.step(x, u)
    }
    fn dynamics_jacobians(&self, _stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.dynamics.jacobians(x, u)
    }
    fn dynamics_hessian_contraction(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        Some(self.dynamics.hessian_contraction(x, u, lambda))
    }
}
