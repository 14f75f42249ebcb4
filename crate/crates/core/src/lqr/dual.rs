use nalgebra::DVector;
use rayon::prelude::*;

use super::{LqrData, RiccatiSolution};

/// Multipliers from the state rows of the KKT stationarity conditions,
/// recursing from the terminal stage:
/// `l_N = Q_N x_N + q_N`, `l_i = Q_i x_i + M_i u_i + A_i' l_{i+1} + q_i`.
pub fn dual_backward(data: &LqrData, x: &[DVector<f64>], u: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n_stages = data.horizon();
    let mut lambda = vec![DVector::zeros(data.state_dim()); n_stages + 1];
    lambda[n_stages] = &data.Q_N * &x[n_stages] + &data.q_N;
    for (i, s) in data.stages.iter().enumerate().rev() {
        lambda[i] = &s.Q * &x[i] + &s.M * &u[i] + s.A.transpose() * &lambda[i + 1] + &s.q;
    }
    lambda
}

/// Multipliers as gradients of the suffix value functions, `l_i = P_i x_i + p_i`.
/// Every stage is independent.
pub fn dual_direct(x: &[DVector<f64>], value: &RiccatiSolution) -> Vec<DVector<f64>> {
    x.par_iter().zip(value.P.par_iter().zip(value.p.par_iter())).map(|(xi, (P, p))| P * xi + p).collect()
}
