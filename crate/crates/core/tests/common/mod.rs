#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdtraj::align::Trajectory;
use spdtraj::spdcore::SpdPoint;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// `A A^T / m + 0.1 I`, well conditioned enough for every oracle below.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, m, m);
    &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.1
}

pub fn random_point(rng: &mut ChaCha8Rng, m: usize) -> SpdPoint {
    SpdPoint::new(random_spd(rng, m)).unwrap()
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, len: usize, m: usize, id: &str) -> Trajectory {
    Trajectory::from_points((0..len).map(|_| random_point(rng, m)).collect(), id).unwrap()
}

/// Random orthogonal matrix from the QR factor of a random square matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    random_matrix(rng, m, m).qr().q()
}

/// Matrix exponential by scaling and squaring of a Taylor series; shares no
/// code with the eigendecomposition path.
pub fn taylor_exp(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let norm = s.norm();
    let mut squarings = 0;
    while norm / f64::powi(2.0, squarings) > 0.25 {
        squarings += 1;
    }
    let a = s / f64::powi(2.0, squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(1e-300)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_abs_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.amax()
}
