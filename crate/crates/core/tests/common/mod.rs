#![allow(dead_code)]

use qkit::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Textbook triple loop.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

/// `Σ_k |a_ik|·|b_kj|`, the scale against which relative errors of a dot
/// product are measured.
pub fn term_magnitude(a: &Matrix, b: &Matrix) -> Matrix {
    naive_matmul(&a.map(f64::abs), &b.map(f64::abs))
}

/// Largest `|x − y| / scale` over all entries (`scale` floored at tiny).
pub fn max_rel_err(x: &Matrix, y: &Matrix, scale: &Matrix) -> f64 {
    assert_eq!(x.shape(), y.shape());
    x.data()
        .iter()
        .zip(y.data())
        .zip(scale.data())
        .map(|((a, b), s)| (a - b).abs() / s.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
