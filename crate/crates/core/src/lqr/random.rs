//! Random, well-conditioned LQR instances for cross-checks.
//!
//! Each stage cost block `[[Q, M], [M', R]]` is drawn as `G G' + 0.1 I`, so `R` is
//! positive definite and the Schur complement `Q - M R^{-1} M'` is as well.

#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{LqrData, LqrStage};

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Symmetric positive definite `G G' / dim + floor I`.
pub fn spd_matrix<R: Rng>(rng: &mut R, dim: usize, floor: f64) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, dim, dim, 1.0);
    let mut w = &g * g.transpose() / (dim.max(1) as f64);
    for i in 0..dim {
        w[(i, i)] += floor;
    }
    w
}

pub fn random_stage<R: Rng>(rng: &mut R, n: usize, m: usize) -> LqrStage {
    let w = spd_matrix(rng, n + m, 0.1);
    let A = DMatrix::identity(n, n) * 0.6 + gaussian_matrix(rng, n, n, 0.4 / (n as f64).sqrt());
    LqrStage {
        Q: w.view((0, 0), (n, n)).into_owned(),
        R: w.view((n, n), (m, m)).into_owned(),
        M: w.view((0, n), (n, m)).into_owned(),
        q: gaussian_vector(rng, n, 1.0),
        r: gaussian_vector(rng, m, 1.0),
        A,
        B: gaussian_matrix(rng, n, m, 1.0),
        c: gaussian_vector(rng, n, 1.0),
    }
}

pub fn random_lqr<R: Rng>(rng: &mut R, horizon: usize, n: usize, m: usize) -> LqrData {
    let stages = (0..horizon).map(|_| random_stage(rng, n, m)).collect();
    LqrData {
        stages,
        Q_N: spd_matrix(rng, n, 0.1),
        q_N: gaussian_vector(rng, n, 1.0),
        s_0: gaussian_vector(rng, n, 1.0),
    }
}
