//! Continuous-time models and their discretizations with first and second derivatives.
//!
//! Derivatives are with respect to the stacked vector `z = (x, u)`.

// Stage and RK weight indices read more clearly than zipped iterators here.
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `xdot = F(x, u)` with analytic derivatives.
pub trait ContinuousModel: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `dF/dz`, `n x (n + m)`.
    fn rate_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `d^2 (v'F) / dz^2`, `(n + m) x (n + m)`.
    fn rate_hessian(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Point mass on a line: `x = (position, velocity)`, `u = acceleration`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegrator;

impl ContinuousModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], u[0]])
    }
    fn rate_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    }
    fn rate_hessian(&self, _x: &DVector<f64>, _u: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }
}

/// Torque-driven pendulum, `x = (angle, angular rate)` with angle 0 hanging down.
#[derive(Debug, Clone, Copy)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
}

impl Pendulum {
    fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

impl ContinuousModel for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let accel = -(self.gravity / self.length) * x[0].sin() + (u[0] - self.damping * x[1]) / self.inertia();
        DVector::from_vec(vec![x[1], accel])
    }
    fn rate_jacobian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let inertia = self.inertia();
        DMatrix::from_row_slice(
            2,
            3,
            &[0.0, 1.0, 0.0, -(self.gravity / self.length) * x[0].cos(), -self.damping / inertia, 1.0 / inertia],
        )
    }
    fn rate_hessian(&self, x: &DVector<f64>, _u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 0)] = v[1] * (self.gravity / self.length) * x[0].sin();
        h
    }
}

/// Cart-pole, `x = (cart position, pole angle, cart velocity, pole rate)`,
/// `u = horizontal force`, pole angle 0 hanging down.
#[derive(Debug, Clone, Copy)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub length: f64,
    pub gravity: f64,
}

/// Value, gradient and Hessian of a scalar in the three variables `(angle, rate, force)`.
struct Local {
    v: f64,
    g: [f64; 3],
    h: [[f64; 3]; 3],
}

impl CartPole {
    /// Numerators of both accelerations and the shared denominator.
    fn parts(&self, theta: f64, omega: f64, force: f64) -> (Local, Local, Local) {
        let (s, c) = theta.sin_cos();
        let (mc, mp, l, g) = (self.cart_mass, self.pole_mass, self.length, self.gravity);
        let c2 = c * c - s * s;
        let den = Local {
            v: mc + mp * s * s,
            g: [2.0 * mp * s * c, 0.0, 0.0],
            h: [[2.0 * mp * c2, 0.0, 0.0], [0.0; 3], [0.0; 3]],
        };
        let cart = Local {
            v: force + mp * l * omega * omega * s + mp * g * s * c,
            g: [mp * l * omega * omega * c + mp * g * c2, 2.0 * mp * l * omega * s, 1.0],
            h: [
                [-mp * l * omega * omega * s - 4.0 * mp * g * s * c, 2.0 * mp * l * omega * c, 0.0],
                [2.0 * mp * l * omega * c, 2.0 * mp * l * s, 0.0],
                [0.0, 0.0, 0.0],
            ],
        };
        let pole = Local {
            v: -force * c - mp * l * omega * omega * c * s - (mc + mp) * g * s,
            g: [force * s - mp * l * omega * omega * c2 - (mc + mp) * g * c, -2.0 * mp * l * omega * c * s, -c],
            h: [
                [force * c + 4.0 * mp * l * omega * omega * s * c + (mc + mp) * g * s, -2.0 * mp * l * omega * c2, s],
                [-2.0 * mp * l * omega * c2, -2.0 * mp * l * c * s, 0.0],
                [s, 0.0, 0.0],
            ],
        };
        (cart, pole, den)
    }
}

/// Quotient rule through second order.
fn quotient(num: &Local, den: &Local, scale: f64) -> Local {
    let d = den.v;
    let q = num.v / d;
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        g[a] = (num.g[a] - q * den.g[a]) / d;
    }
    for a in 0..3 {
        for b in 0..3 {
            h[a][b] =
                num.h[a][b] / d - (num.g[a] * den.g[b] + den.g[a] * num.g[b]) / (d * d) - num.v * den.h[a][b] / (d * d)
                    + 2.0 * num.v * den.g[a] * den.g[b] / (d * d * d);
        }
    }
    Local { v: q * scale, g: g.map(|x| x * scale), h: h.map(|r| r.map(|x| x * scale)) }
}

// Positions of (angle, rate, force) inside z = (p, angle, pdot, rate, force).
const CARTPOLE_VARS: [usize; 3] = [1, 3, 4];

impl ContinuousModel for CartPole {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (cart, pole, den) = self.parts(x[1], x[3], u[0]);
        DVector::from_vec(vec![x[2], x[3], cart.v / den.v, pole.v / (self.length * den.v)])
    }
    fn rate_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let (cart, pole, den) = self.parts(x[1], x[3], u[0]);
        let cart_acc = quotient(&cart, &den, 1.0);
        let pole_acc = quotient(&pole, &den, 1.0 / self.length);
        let mut j = DMatrix::zeros(4, 5);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        for (a, &col) in CARTPOLE_VARS.iter().enumerate() {
            j[(2, col)] = cart_acc.g[a];
            j[(3, col)] = pole_acc.g[a];
        }
        j
    }
    fn rate_hessian(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let (cart, pole, den) = self.parts(x[1], x[3], u[0]);
        let cart_acc = quotient(&cart, &den, 1.0);
        let pole_acc = quotient(&pole, &den, 1.0 / self.length);
        let mut h = DMatrix::zeros(5, 5);
        for (a, &ra) in CARTPOLE_VARS.iter().enumerate() {
            for (b, &cb) in CARTPOLE_VARS.iter().enumerate() {
                h[(ra, cb)] = v[2] * cart_acc.h[a][b] + v[3] * pole_acc.h[a][b];
            }
        }
        h
    }
}

/// One-step map `x_{i+1} = f(x_i, u_i)` of a continuous model.
#[derive(Debug, Clone, Copy)]
pub struct Discretized<Mdl> {
    pub model: Mdl,
    pub dt: f64,
    pub integrator: Integrator,
}

/// RK4 stage weights and the fractions of `dt` at which stages are evaluated.
const RK4_WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];
const RK4_OFFSETS: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

/// Stage points of one RK4 step with their Jacobians.
struct Rk4Stages {
    /// State argument `y_j` of each stage.
    points: Vec<DVector<f64>>,
    /// `dy_j / dz`, `n x (n + m)`.
    point_jac: Vec<DMatrix<f64>>,
    /// `F(y_j, u)`.
    rates: Vec<DVector<f64>>,
    /// `dF/dw` evaluated at `(y_j, u)`.
    rate_jac: Vec<DMatrix<f64>>,
}

impl<Mdl: ContinuousModel> Discretized<Mdl> {
    fn n(&self) -> usize {
        self.model.state_dim()
    }

    fn m(&self) -> usize {
        self.model.control_dim()
    }

    fn rk4_stages(&self, x: &DVector<f64>, u: &DVector<f64>) -> Rk4Stages {
        let (n, m) = (self.n(), self.m());
        let mut selector = DMatrix::zeros(n, n + m);
        selector.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut st = Rk4Stages { points: vec![], point_jac: vec![], rates: vec![], rate_jac: vec![] };
        for j in 0..4 {
            let (y, dy) = if j == 0 {
                (x.clone(), selector.clone())
            } else {
                let a = RK4_OFFSETS[j] * self.dt;
                (x + &st.rates[j - 1] * a, &selector + self.stage_rate_jacobian(&st, j - 1) * a)
            };
            st.rates.push(self.model.rate(&y, u));
            st.rate_jac.push(self.model.rate_jacobian(&y, u));
            st.points.push(y);
            st.point_jac.push(dy);
        }
        st
    }

    /// `dw_j / dz` where `w_j = (y_j, u)`.
    fn stage_arg_jacobian(&self, st: &Rk4Stages, j: usize) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut w = DMatrix::zeros(n + m, n + m);
        w.view_mut((0, 0), (n, n + m)).copy_from(&st.point_jac[j]);
        w.view_mut((n, n), (m, m)).fill_with_identity();
        w
    }

    /// `d k_j / dz`.
    fn stage_rate_jacobian(&self, st: &Rk4Stages, j: usize) -> DMatrix<f64> {
        &st.rate_jac[j] * self.stage_arg_jacobian(st, j)
    }

    /// `d^2 (v' k_j) / dz^2`, by the chain rule through the earlier stages.
    fn stage_rate_hessian(&self, st: &Rk4Stages, u: &DVector<f64>, j: usize, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let w = self.stage_arg_jacobian(st, j);
        let mut h = w.transpose() * self.model.rate_hessian(&st.points[j], u, v) * &w;
        if j > 0 {
            // v'k_j depends on y_j = x + a k_{j-1}; its curvature enters through k_{j-1}.
            let mu: DVector<f64> = (st.rate_jac[j].transpose() * v).rows(0, n).into_owned();
            h += self.stage_rate_hessian(st, u, j - 1, &mu) * (RK4_OFFSETS[j] * self.dt);
        }
        h
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.integrator {
            Integrator::Euler => x + self.model.rate(x, u) * self.dt,
            Integrator::Rk4 => {
                let st = self.rk4_stages(x, u);
                let mut out = x.clone();
                for j in 0..4 {
                    out += &st.rates[j] * (self.dt * RK4_WEIGHTS[j] / 6.0);
                }
                out
            }
        }
    }

    /// `(df/dx, df/du)`.
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.n(), self.m());
        let mut jac = match self.integrator {
            Integrator::Euler => self.model.rate_jacobian(x, u) * self.dt,
            Integrator::Rk4 => {
                let st = self.rk4_stages(x, u);
                let mut acc = DMatrix::zeros(n, n + m);
                for j in 0..4 {
                    acc += self.stage_rate_jacobian(&st, j) * (self.dt * RK4_WEIGHTS[j] / 6.0);
                }
                acc
            }
        };
        for i in 0..n {
            jac[(i, i)] += 1.0;
        }
        (jac.columns(0, n).into_owned(), jac.columns(n, m).into_owned())
    }

    /// `d^2 (lambda' f) / dz^2`.
    pub fn hessian_contraction(&self, x: &DVector<f64>, u: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
        match self.integrator {
            Integrator::Euler => self.model.rate_hessian(x, u, lambda) * self.dt,
            Integrator::Rk4 => {
                let st = self.rk4_stages(x, u);
                let (n, m) = (self.n(), self.m());
                let mut acc = DMatrix::zeros(n + m, n + m);
                for j in 0..4 {
                    acc += self.stage_rate_hessian(&st, u, j, lambda) * (self.dt * RK4_WEIGHTS[j] / 6.0);
                }
                acc
            }
        }
    }
}

impl<T: ContinuousModel + ?Sized> ContinuousModel for Box<T> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).rate(x, u)
    }
    fn rate_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).rate_jacobian(x, u)
    }
    fn rate_hessian(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        (**self).rate_hessian(x, u, v)
    }
}
