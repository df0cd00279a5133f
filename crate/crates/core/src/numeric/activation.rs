use std::f64::consts::FRAC_1_SQRT_2;

use super::Matrix;

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let cols = m.cols();
    let mut data = Vec::with_capacity(m.rows() * cols);
    for i in 0..m.rows() {
        let row = m.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        data.extend(row.iter().map(|v| (v - max).exp()));
        let z: f64 = data[start..].iter().sum();
        for v in &mut data[start..] {
            *v /= z;
        }
    }
    Matrix::from_parts(m.rows(), cols, data)
}

/// Exact GELU, `x · Φ(x)` with the Gaussian CDF from `erf`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu(m: &Matrix) -> Matrix {
    m.map(gelu_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_row() {
        let s = softmax_rows(&Matrix::zeros(1, 2));
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let s = softmax_rows(&Matrix::from_rows(&[vec![1000.0, 0.0]]).unwrap());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(s.get(0, 1) >= 0.0 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn shift_invariance() {
        let m = Matrix::from_fn(4, 7, |i, j| ((i * 7 + j) as f64).sin() * 3.0);
        let a = softmax_rows(&m);
        let b = softmax_rows(&m.add_scalar(12.5));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for s in a.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!(gelu_scalar(-10.0).abs() < 1e-20);
        assert!((gelu_scalar(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn gelu_minimum_is_about_minus_0_17() {
        // dense sampling of [-2, 0] at 1e-4
        let min = (0..=20_000).map(|i| gelu_scalar(-2.0 + i as f64 * 1e-4)).fold(f64::INFINITY, f64::min);
        assert!((min + 0.17).abs() < 5e-4, "min = {min}");
        assert!(min >= -0.1701);
    }
}
