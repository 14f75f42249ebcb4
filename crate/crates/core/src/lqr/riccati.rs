#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};

use super::{symmetrize, LqrData, LqrError, LqrStage, RiccatiSolution};

/// `(K, k, H, h)` of one stage.
pub type StageGains = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>);

/// Feedback gains of one stage given the next stage's value function.
///
/// Returns `(K, k, H, h)` where `G = R + B'P B`, `H = B'P A + M'`,
/// `h = B'(p + P c) + r`, `K = -G^{-1} H` and `k = -G^{-1} h`. `G` is
/// factorized by Cholesky; failure reports `stage`.
pub fn stage_gains(
    stage_index: usize,
    s: &LqrStage,
    P_next: &DMatrix<f64>,
    p_next: &DVector<f64>,
) -> Result<StageGains, LqrError> {
    let BtP = s.B.transpose() * P_next;
    let mut G = &s.R + &BtP * &s.B;
    symmetrize(&mut G);
    let H = &BtP * &s.A + s.M.transpose();
    let h = s.B.transpose() * (p_next + P_next * &s.c) + &s.r;
    let chol = G.cholesky().ok_or(LqrError::NotPositiveDefinite { stage: stage_index })?;
    let K = -chol.solve(&H);
    let k = -chol.solve(&h);
    Ok((K, k, H, h))
}

/// Sequential Riccati backward pass.
pub fn riccati_backward(data: &LqrData) -> Result<RiccatiSolution, LqrError> {
    let n_stages = data.horizon();
    let mut P = Vec::with_capacity(n_stages + 1);
    let mut p = Vec::with_capacity(n_stages + 1);
    let mut K = Vec::with_capacity(n_stages);
    let mut k = Vec::with_capacity(n_stages);

    let mut P_next = data.Q_N.clone();
    symmetrize(&mut P_next);
    let mut p_next = data.q_N.clone();
    P.push(P_next.clone());
    p.push(p_next.clone());

    for (i, s) in data.stages.iter().enumerate().rev() {
        let (Ki, ki, H, h) = stage_gains(i, s, &P_next, &p_next)?;
        let At = s.A.transpose();
        let mut Pi = &s.Q + &At * &P_next * &s.A + Ki.transpose() * &H;
        symmetrize(&mut Pi);
        let pi = &s.q + &At * (&p_next + &P_next * &s.c) + Ki.transpose() * &h;
        P.push(Pi.clone());
        p.push(pi.clone());
        K.push(Ki);
        k.push(ki);
        P_next = Pi;
        p_next = pi;
    }

    P.reverse();
    p.reverse();
    K.reverse();
    k.reverse();
    Ok(RiccatiSolution { P, p, K, k })
}

/// Sequential closed-loop rollout from `s_0`.
pub fn riccati_forward(data: &LqrData, gains: &RiccatiSolution) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut x = Vec::with_capacity(data.horizon() + 1);
    let mut u = Vec::with_capacity(data.horizon());
    x.push(data.s_0.clone());
    for (i, s) in data.stages.iter().enumerate() {
        let xi = &x[i];
        let ui = &gains.K[i] * xi + &gains.k[i];
        let next = &s.A * xi + &s.B * &ui + &s.c;
        u.push(ui);
        x.push(next);
    }
    (x, u)
}
