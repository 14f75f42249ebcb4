#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::riccati::stage_gains;
use super::{symmetrize, LqrData, LqrError, RiccatiSolution};
use crate::scan::{self, ScanError, ScanStrategy};

/// Parameters of an interval value function
///
/// ```text
/// V(x_i, x_j) = max_l  1/2 x_i'P x_i + p'x_i - 1/2 l'C l - l'(x_j - A x_i - c)
/// ```
///
/// i.e. the cheapest way to go from `x_i` to `x_j` over a run of stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueElement {
    pub P: DMatrix<f64>,
    pub p: DVector<f64>,
    pub A: DMatrix<f64>,
    pub C: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl ValueElement {
    pub fn zeros(n: usize) -> Self {
        Self {
            P: DMatrix::zeros(n, n),
            p: DVector::zeros(n),
            A: DMatrix::zeros(n, n),
            C: DMatrix::zeros(n, n),
            c: DVector::zeros(n),
        }
    }
}

/// Single-stage value functions for stages `0..N` plus the terminal element.
pub fn make_leaf_elements(data: &LqrData) -> Result<Vec<ValueElement>, LqrError> {
    let n = data.state_dim();
    let mut leaves: Vec<ValueElement> = data
        .stages
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let chol = s.R.clone().cholesky().ok_or(LqrError::NotPositiveDefinite { stage: i })?;
            // R^{-1} [M' , r , B'] in one solve.
            let Mt = s.M.transpose();
            let Bt = s.B.transpose();
            let Rinv_Mt = chol.solve(&Mt);
            let Rinv_r = chol.solve(&s.r);
            let Rinv_Bt = chol.solve(&Bt);
            let mut P = &s.Q - &s.M * &Rinv_Mt;
            symmetrize(&mut P);
            let mut C = &s.B * &Rinv_Bt;
            symmetrize(&mut C);
            Ok(ValueElement { P, p: &s.q - &s.M * &Rinv_r, A: &s.A - &s.B * &Rinv_Mt, C, c: &s.c - &s.B * &Rinv_r })
        })
        .collect::<Result<_, LqrError>>()?;
    let mut P_N = data.Q_N.clone();
    symmetrize(&mut P_N);
    leaves.push(ValueElement { P: P_N, p: data.q_N.clone(), ..ValueElement::zeros(n) });
    Ok(leaves)
}

/// Combines `V(i -> j)` (`first`) with `V(j -> k)` (`second`) into `V(i -> k)`.
pub fn combine_value(first: &ValueElement, second: &ValueElement) -> Result<ValueElement, LqrError> {
    let n = first.P.nrows();
    let eye = DMatrix::<f64>::identity(n, n);

    // (I + P2 C1)^{-1} [P2 A1 | p2 + P2 c1]
    let lu_pc = (&eye + &second.P * &first.C).lu();
    let rhs_pc = &second.P * &first.A;
    let x_pc = lu_pc.solve(&rhs_pc).ok_or(LqrError::SingularCombination)?;
    let v_pc = lu_pc.solve(&(&second.p + &second.P * &first.c)).ok_or(LqrError::SingularCombination)?;

    // (I + C1 P2)^{-1} [A1 | C1 | c1 - C1 p2]
    let lu_cp = (&eye + &first.C * &second.P).lu();
    let y_a = lu_cp.solve(&first.A).ok_or(LqrError::SingularCombination)?;
    let y_c = lu_cp.solve(&first.C).ok_or(LqrError::SingularCombination)?;
    let y_v = lu_cp.solve(&(&first.c - &first.C * &second.p)).ok_or(LqrError::SingularCombination)?;

    let A1t = first.A.transpose();
    let mut P = &A1t * x_pc + &first.P;
    symmetrize(&mut P);
    let p = &A1t * v_pc + &first.p;
    let A = &second.A * y_a;
    let mut C = &second.A * y_c * second.A.transpose() + &second.C;
    symmetrize(&mut C);
    let c = &second.A * y_v + &second.c;
    if !(P.iter().chain(C.iter()).all(|v| v.is_finite())) {
        return Err(LqrError::SingularCombination);
    }
    Ok(ValueElement { P, p, A, C, c })
}

/// Suffix value functions by a reverse scan, then per-stage gains.
pub fn parallel_value_scan(data: &LqrData) -> Result<RiccatiSolution, LqrError> {
    parallel_value_scan_with(data, ScanStrategy::Tree)
}

pub fn parallel_value_scan_with(data: &LqrData, strategy: ScanStrategy) -> Result<RiccatiSolution, LqrError> {
    let leaves = make_leaf_elements(data)?;
    let suffix = scan::try_reverse_scan(strategy, &leaves, combine_value).map_err(|e| match e {
        ScanError::Combine(err) => err,
        ScanError::Empty => unreachable!("leaves always include the terminal element"),
    })?;
    let (P, p): (Vec<_>, Vec<_>) = suffix.into_iter().map(|v| (v.P, v.p)).unzip();

    let gains: Vec<(DMatrix<f64>, DVector<f64>)> = data
        .stages
        .par_iter()
        .enumerate()
        .map(|(i, s)| stage_gains(i, s, &P[i + 1], &p[i + 1]).map(|(K, k, _, _)| (K, k)))
        .collect::<Result<_, _>>()?;
    let (K, k) = gains.into_iter().unzip();
    Ok(RiccatiSolution { P, p, K, k })
}

/// The affine map `x -> linear * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub offset: DVector<f64>,
    pub linear: DMatrix<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }
}

/// Composition "apply `first`, then `second`": `((a, B), (c, D)) -> (D a + c, D B)`.
pub fn combine_affine(first: &AffineMap, second: &AffineMap) -> AffineMap {
    AffineMap { offset: &second.linear * &first.offset + &second.offset, linear: &second.linear * &first.linear }
}

/// Closed-loop rollout via a forward scan over the per-stage affine maps.
pub fn affine_rollout(data: &LqrData, gains: &RiccatiSolution) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    affine_rollout_with(data, gains, ScanStrategy::Tree)
}

pub fn affine_rollout_with(
    data: &LqrData,
    gains: &RiccatiSolution,
    strategy: ScanStrategy,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let maps: Vec<AffineMap> = data
        .stages
        .par_iter()
        .enumerate()
        .map(|(i, s)| AffineMap { offset: &s.B * &gains.k[i] + &s.c, linear: &s.A + &s.B * &gains.K[i] })
        .collect();
    let prefixes =
        scan::try_forward_scan(strategy, &maps, |a, b| Ok::<_, std::convert::Infallible>(combine_affine(a, b)))
            .expect("horizon is at least 1");

    let s0 = &data.s_0;
    let mut x = Vec::with_capacity(maps.len() + 1);
    x.push(s0.clone());
    x.par_extend(prefixes.par_iter().map(|f| f.apply(s0)));
    let u = (0..data.horizon()).into_par_iter().map(|i| &gains.K[i] * &x[i] + &gains.k[i]).collect();
    (x, u)
}
