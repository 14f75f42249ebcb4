//! Dense Newton-KKT reference solve, used to cross-check the structured back-ends.
//!
//! Primal variables are stacked as `(x_0, u_0, x_1, u_1, ..., x_N)` and the
//! constraint rows as `(s_0 - x_0, A_0 x_0 + B_0 u_0 + c_0 - x_1, ...)`. The system
//!
//! ```text
//! [ H  J' ] [ z ]     [ g ]
//! [ J  0  ] [ l ] = - [ e ]
//! ```
//!
//! is assembled explicitly (H block diagonal cost Hessian, g the linear cost
//! terms, J the constraint Jacobian, e the constraint offsets) and solved by LU.

#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use super::{LqrData, LqrError, LqrSolution};

/// Assembles the KKT matrix and right-hand side.
pub fn dense_kkt_matrix(data: &LqrData) -> (DMatrix<f64>, DVector<f64>) {
    let (N, n, m) = (data.horizon(), data.state_dim(), data.control_dim());
    let nz = N * (n + m) + n;
    let nc = (N + 1) * n;
    let xoff = |i: usize| i * (n + m);
    let uoff = |i: usize| i * (n + m) + n;

    let mut K = DMatrix::zeros(nz + nc, nz + nc);
    let mut rhs = DVector::zeros(nz + nc);

    for (i, s) in data.stages.iter().enumerate() {
        K.view_mut((xoff(i), xoff(i)), (n, n)).copy_from(&s.Q);
        K.view_mut((xoff(i), uoff(i)), (n, m)).copy_from(&s.M);
        K.view_mut((uoff(i), xoff(i)), (m, n)).copy_from(&s.M.transpose());
        K.view_mut((uoff(i), uoff(i)), (m, m)).copy_from(&s.R);
        rhs.rows_mut(xoff(i), n).copy_from(&(-&s.q));
        rhs.rows_mut(uoff(i), m).copy_from(&(-&s.r));
    }
    K.view_mut((xoff(N), xoff(N)), (n, n)).copy_from(&data.Q_N);
    rhs.rows_mut(xoff(N), n).copy_from(&(-&data.q_N));

    // Constraint rows and their transposes.
    let eye = DMatrix::<f64>::identity(n, n);
    let mut J = DMatrix::zeros(nc, nz);
    J.view_mut((0, xoff(0)), (n, n)).copy_from(&(-&eye));
    rhs.rows_mut(nz, n).copy_from(&(-&data.s_0));
    for (i, s) in data.stages.iter().enumerate() {
        let row = (i + 1) * n;
        J.view_mut((row, xoff(i)), (n, n)).copy_from(&s.A);
        J.view_mut((row, uoff(i)), (n, m)).copy_from(&s.B);
        J.view_mut((row, xoff(i + 1)), (n, n)).copy_from(&(-&eye));
        rhs.rows_mut(nz + row, n).copy_from(&(-&s.c));
    }
    K.view_mut((nz, 0), (nc, nz)).copy_from(&J);
    K.view_mut((0, nz), (nz, nc)).copy_from(&J.transpose());
    (K, rhs)
}

/// Solves the dense KKT system and unstacks `(x, u, lambda)`.
pub fn dense_kkt_solve(data: &LqrData) -> Result<LqrSolution, LqrError> {
    data.validate()?;
    let (N, n, m) = (data.horizon(), data.state_dim(), data.control_dim());
    let (K, rhs) = dense_kkt_matrix(data);
    let sol = K.lu().solve(&rhs).ok_or(LqrError::SingularKkt)?;
    let nz = N * (n + m) + n;
    let x = (0..=N).map(|i| sol.rows(i * (n + m), n).into_owned()).collect();
    let u = (0..N).map(|i| sol.rows(i * (n + m) + n, m).into_owned()).collect();
    let lambda = (0..=N).map(|i| sol.rows(nz + i * n, n).into_owned()).collect();
    Ok(LqrSolution { x, u, lambda })
}
