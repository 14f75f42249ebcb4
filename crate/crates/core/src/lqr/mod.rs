//! Exact primal-dual solves of finite-horizon LQR problems.
//!
//! The problem solved is
//!
//! ```text
//! min  sum_i ( 1/2 x_i'Q_i x_i + q_i'x_i + 1/2 u_i'R_i u_i + r_i'u_i + x_i'M_i u_i )
//!        + 1/2 x_N'Q_N x_N + q_N'x_N
//! s.t. x_0 = s_0,  x_{i+1} = A_i x_i + B_i u_i + c_i
//! ```
//!
//! Two back-ends are provided. The sequential one runs the Riccati backward pass,
//! the forward rollout and the backward multiplier recursion. The parallel one
//! builds interval value functions and reduces them with a reverse associative
//! scan, composes the closed-loop affine maps with a forward scan, and reads the
//! multipliers off the value functions stage by stage.

#![allow(non_snake_case)]

mod dense;
mod dual;
mod parallel;
pub mod random;
mod riccati;
mod serde_matrix;

pub(crate) use serde_matrix::vectors as serde_vectors;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{dense_kkt_matrix, dense_kkt_solve};
pub use dual::{dual_backward, dual_direct};
pub use parallel::{
    affine_rollout, combine_affine, combine_value, make_leaf_elements, parallel_value_scan, AffineMap, ValueElement,
};
pub use riccati::{riccati_backward, riccati_forward, stage_gains, StageGains};

/// Symmetric tolerance used by the debug-level invariant checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    /// A matrix that must be positive definite failed to factorize.
    /// `stage` is the stage whose cost block was being factorized.
    #[error("matrix at stage {stage} is not positive definite")]
    NotPositiveDefinite { stage: usize },
    #[error("singular (I + P C) in value-function combination")]
    SingularCombination,
    #[error("dense KKT matrix is singular")]
    SingularKkt,
    #[error("{field}: {detail}")]
    Dimension { field: String, detail: String },
}

/// Which algorithm solves the LQR problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LqrBackend {
    #[default]
    Sequential,
    Parallel,
}

/// One stage of an LQR problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrStage {
    #[serde(with = "serde_matrix::matrix")]
    pub Q: DMatrix<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub R: DMatrix<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub M: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub q: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub r: DVector<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub A: DMatrix<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub B: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub c: DVector<f64>,
}

impl LqrStage {
    /// A stage with every term zero.
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            Q: DMatrix::zeros(n, n),
            R: DMatrix::zeros(m, m),
            M: DMatrix::zeros(n, m),
            q: DVector::zeros(n),
            r: DVector::zeros(m),
            A: DMatrix::zeros(n, n),
            B: DMatrix::zeros(n, m),
            c: DVector::zeros(n),
        }
    }
}

/// A complete LQR instance. The horizon is `stages.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrData {
    pub stages: Vec<LqrStage>,
    #[serde(with = "serde_matrix::matrix")]
    pub Q_N: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub q_N: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub s_0: DVector<f64>,
}

impl LqrData {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_dim(&self) -> usize {
        self.s_0.len()
    }

    pub fn control_dim(&self) -> usize {
        self.stages.first().map_or(0, |s| s.R.nrows())
    }

    /// Checks that every block has the shape implied by `s_0` and the first `R`.
    pub fn validate(&self) -> Result<(), LqrError> {
        if self.stages.is_empty() {
            return Err(dim_err("stages", "horizon must be at least 1".into()));
        }
        let n = self.state_dim();
        let m = self.control_dim();
        check_mat("Q_N", &self.Q_N, n, n)?;
        check_vec("q_N", &self.q_N, n)?;
        for (i, s) in self.stages.iter().enumerate() {
            let f = |name: &str| format!("stages[{i}].{name}");
            check_mat(&f("Q"), &s.Q, n, n)?;
            check_mat(&f("R"), &s.R, m, m)?;
            check_mat(&f("M"), &s.M, n, m)?;
            check_vec(&f("q"), &s.q, n)?;
            check_vec(&f("r"), &s.r, m)?;
            check_mat(&f("A"), &s.A, n, n)?;
            check_mat(&f("B"), &s.B, n, m)?;
            check_vec(&f("c"), &s.c, n)?;
        }
        Ok(())
    }
}

fn dim_err(field: &str, detail: String) -> LqrError {
    LqrError::Dimension { field: field.to_string(), detail }
}

fn check_mat(field: &str, mat: &DMatrix<f64>, rows: usize, cols: usize) -> Result<(), LqrError> {
    if mat.shape() != (rows, cols) {
        return Err(dim_err(field, format!("expected {rows}x{cols}, found {}x{}", mat.nrows(), mat.ncols())));
    }
    Ok(())
}

fn check_vec(field: &str, v: &DVector<f64>, len: usize) -> Result<(), LqrError> {
    if v.len() != len {
        return Err(dim_err(field, format!("expected length {len}, found {}", v.len())));
    }
    Ok(())
}

/// Suffix value functions `V_i(x) = 1/2 x'P_i x + p_i'x` (i = 0..=N) and the
/// affine feedback `u_i = K_i x_i + k_i` (i = 0..N).
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub P: Vec<DMatrix<f64>>,
    pub p: Vec<DVector<f64>>,
    pub K: Vec<DMatrix<f64>>,
    pub k: Vec<DVector<f64>>,
}

/// Primal trajectories and multipliers of an LQR problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrSolution {
    #[serde(with = "serde_matrix::vectors")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "serde_matrix::vectors")]
    pub u: Vec<DVector<f64>>,
    #[serde(rename = "lambda", with = "serde_matrix::vectors")]
    pub lambda: Vec<DVector<f64>>,
}

/// Solve `data` with the chosen back-end.
pub fn solve(data: &LqrData, backend: LqrBackend) -> Result<LqrSolution, LqrError> {
    data.validate()?;
    let (x, u, lambda) = match backend {
        LqrBackend::Sequential => {
            let gains = riccati_backward(data)?;
            let (x, u) = riccati_forward(data, &gains);
            let lambda = dual_backward(data, &x, &u);
            (x, u, lambda)
        }
        LqrBackend::Parallel => {
            let value = parallel_value_scan(data)?;
            let (x, u) = affine_rollout(data, &value);
            let lambda = dual_direct(&x, &value);
            (x, u, lambda)
        }
    };
    Ok(LqrSolution { x, u, lambda })
}

/// Objective value of a primal trajectory (dynamics are not checked).
pub fn objective(data: &LqrData, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
    let mut total = 0.0;
    for (i, s) in data.stages.iter().enumerate() {
        let (xi, ui) = (&x[i], &u[i]);
        total +=
            0.5 * xi.dot(&(&s.Q * xi)) + s.q.dot(xi) + 0.5 * ui.dot(&(&s.R * ui)) + s.r.dot(ui) + xi.dot(&(&s.M * ui));
    }
    let xn = &x[data.horizon()];
    total + 0.5 * xn.dot(&(&data.Q_N * xn)) + data.q_N.dot(xn)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `||a - b|| / ||b||` over stacked vectors; 0 when both are zero.
pub fn relative_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "trajectory lengths differ");
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (ai, bi) in a.iter().zip(b) {
        diff += (ai - bi).norm_squared();
        norm += bi.norm_squared();
    }
    if diff == 0.0 {
        0.0
    } else {
        (diff / norm).sqrt()
    }
}

/// `||a - b||_F / ||b||_F` for single matrices; 0 when both are zero.
pub fn relative_error_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    if diff == 0.0 {
        0.0
    } else {
        diff / b.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_instance() -> LqrData {
        let mut stage = LqrStage::zeros(1, 1);
        stage.R[(0, 0)] = 1.0;
        stage.A[(0, 0)] = 1.0;
        stage.B[(0, 0)] = 1.0;
        LqrData {
            stages: vec![stage],
            Q_N: DMatrix::from_element(1, 1, 1.0),
            q_N: DVector::zeros(1),
            s_0: DVector::from_element(1, 2.0),
        }
    }

    #[test]
    fn scalar_both_backends() {
        let data = scalar_instance();
        for backend in [LqrBackend::Sequential, LqrBackend::Parallel] {
            let sol = solve(&data, backend).unwrap();
            assert!((sol.x[0][0] - 2.0).abs() < 1e-15);
            assert!((sol.x[1][0] - 1.0).abs() < 1e-15);
            assert!((sol.u[0][0] + 1.0).abs() < 1e-15);
            assert!((sol.lambda[0][0] - 1.0).abs() < 1e-15);
            assert!((sol.lambda[1][0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn validate_names_the_offending_field() {
        let mut data = scalar_instance();
        data.stages[0].B = DMatrix::zeros(1, 2);
        match data.validate() {
            Err(LqrError::Dimension { field, .. }) => assert_eq!(field, "stages[0].B"),
            other => panic!("unexpected {other:?}"),
        }
        data.stages.clear();
        assert!(matches!(data.validate(), Err(LqrError::Dimension { .. })));
    }

    #[test]
    fn json_is_row_major() {
        let mut data = scalar_instance();
        data.stages[0].Q = DMatrix::zeros(1, 1);
        let mut two = LqrStage::zeros(2, 1);
        two.A = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let json = serde_json::to_value(&two).unwrap();
        assert_eq!(json["A"], serde_json::json!([[1.0, 2.0], [3.0, 4.0]]));
        assert_eq!(json["B"], serde_json::json!([[0.0], [0.0]]));
        let back: LqrStage = serde_json::from_value(json).unwrap();
        assert_eq!(back, two);

        let text = serde_json::to_string(&data).unwrap();
        let parsed: LqrData = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, data);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let bad =
            r#"{"Q":[[1,2],[3]],"R":[[1]],"M":[[0],[0]],"q":[0,0],"r":[0],"A":[[1,0],[0,1]],"B":[[0],[0]],"c":[0,0]}"#;
        let err = serde_json::from_str::<LqrStage>(bad).unwrap_err();
        assert!(err.to_string().contains("row"), "{err}");
    }
}
