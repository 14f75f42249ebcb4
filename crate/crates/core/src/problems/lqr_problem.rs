#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use crate::lqr::LqrData;
use crate::nlp::OcpProblem;

/// An LQR problem posed as a nonlinear one: quadratic costs and affine dynamics.
#[derive(Debug, Clone)]
pub struct LqrProblem {
    pub data: LqrData,
}

impl LqrProblem {
    pub fn new(data: LqrData) -> Self {
        LqrProblem { data }
    }
}

impl OcpProblem for LqrProblem {
    fn horizon(&self) -> usize {
        self.data.horizon()
    }
    fn state_dim(&self) -> usize {
        self.data.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.data.control_dim()
    }
    fn initial_state(&self) -> DVector<f64> {
        self.data.s_0.clone()
    }

    fn stage_cost(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let s = &self.data.stages[stage];
        0.5 * x.dot(&(&s.Q * x)) + s.q.dot(x) + 0.5 * u.dot(&(&s.R * u)) + s.r.dot(u) + x.dot(&(&s.M * u))
    }
    fn stage_cost_gradient(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let s = &self.data.stages[stage];
        let gx = &s.Q * x + &s.M * u + &s.q;
        let gu = &s.R * u + s.M.transpose() * x + &s.r;
        DVector::from_iterator(gx.len() + gu.len(), gx.iter().chain(gu.iter()).copied())
    }
    fn stage_cost_hessian(&self, stage: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let s = &self.data.stages[stage];
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut h = DMatrix::zeros(n + m, n + m);
        h.view_mut((0, 0), (n, n)).copy_from(&s.Q);
        h.view_mut((0, n), (n, m)).copy_from(&s.M);
        h.view_mut((n, 0), (m, n)).copy_from(&s.M.transpose());
        h.view_mut((n, n), (m, m)).copy_from(&s.R);
        h
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.data.Q_N * x)) + self.data.q_N.dot(x)
    }
    fn terminal_cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.data.Q_N * x + &self.data.q_N
    }
    fn terminal_cost_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.data.Q_N.clone()
    }

    fn dynamics(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let s = &self.data.stages[stage];
        &s.A * x + &s.B * u + &s.c
    }
    fn dynamics_jacobians(&self, stage: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = &self.data.stages[stage];
        (s.A.clone(), s.B.clone())
    }
    fn dynamics_hessian_contraction(
        &self,
        _stage: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _lambda: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        let k = self.state_dim() + self.control_dim();
        Some(DMatrix::zeros(k, k))
    }
}
