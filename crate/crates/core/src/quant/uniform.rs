use serde::{Deserialize, Serialize};

use super::{check_bit, max_code, QuantParams, QuantizedTensor, TensorParams};
use crate::error::{QkitError, Result};
use crate::numeric::Matrix;

/// Asymmetric uniform quantizer: `code = clamp(⌊x/scale⌉ + zp, 0, 2^bit−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformParams {
    pub scale: f64,
    pub zero_point: u8,
    pub bit: u8,
}

impl UniformParams {
    pub fn new(scale: f64, zero_point: u8, bit: u8) -> Result<Self> {
        check_bit(bit)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QkitError::InvalidParam(format!("uniform scale {scale} must be positive")));
        }
        if zero_point > max_code(bit) {
            return Err(QkitError::InvalidParam(format!("zero point {zero_point} exceeds {}", max_code(bit))));
        }
        Ok(Self { scale, zero_point, bit })
    }

    #[inline]
    pub fn code(&self, x: f64) -> u8 {
        self.code_f64(x) as u8
    }

    /// The code as an (integral) float.
    #[inline]
    pub(crate) fn code_f64(&self, x: f64) -> f64 {
        let v = super::round_half_away(x / self.scale) + self.zero_point as f64;
        v.clamp(0.0, max_code(self.bit) as f64)
    }

    /// Real interval covered by the code range.
    pub fn range(&self) -> (f64, f64) {
        (dequant_code(self, 0), dequant_code(self, max_code(self.bit)))
    }
}

#[inline]
pub(crate) fn dequant_code(p: &UniformParams, code: u8) -> f64 {
    p.scale * (code as f64 - p.zero_point as f64)
}

/// Bridges a clipping interval `[lo, hi]` to affine parameters.
///
/// The interval is widened to contain zero first: the zero point has to be a
/// valid code, so a range entirely above (or below) zero could not otherwise
/// be covered.
pub fn uniform_params_from_bounds(lo: f64, hi: f64, bit: u8) -> Result<UniformParams> {
    check_bit(bit)?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(QkitError::InvalidParam(format!("bounds need lo < hi, got [{lo}, {hi}]")));
    }
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let max = max_code(bit) as f64;
    let scale = (hi - lo) / max;
    let zp = (-lo / scale).round().clamp(0.0, max) as u8;
    UniformParams::new(scale, zp, bit)
}

pub fn uniform_quant(x: &Matrix, p: &UniformParams) -> QuantizedTensor {
    let codes = x.data().iter().map(|&v| p.code(v)).collect();
    QuantizedTensor::from_parts(x.rows(), x.cols(), codes, p.bit, TensorParams::PerTensor(QuantParams::Uniform(*p)))
}

/// `scale · (code − zero_point)`; also handles per-row and per-column tensors.
pub fn uniform_dequant(t: &QuantizedTensor) -> Matrix {
    match t.params() {
        TensorParams::PerTensor(QuantParams::Uniform(p)) => {
            Matrix::from_parts(t.rows(), t.cols(), t.codes().iter().map(|&c| dequant_code(p, c)).collect())
        }
        TensorParams::PerRow(_) | TensorParams::PerCol(_) => t.dequantize(),
        other => panic!("uniform_dequant on non-uniform tensor {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: &[f64]) -> Matrix {
        Matrix::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn grid_points_and_clamp() {
        let p = UniformParams::new(1.0, 0, 4).unwrap();
        let t = uniform_quant(&m(&[0.0, 7.0, 15.0, 1e6, -3.0]), &p);
        assert_eq!(t.codes(), &[0, 7, 15, 15, 0]);
        assert_eq!(uniform_dequant(&t).data(), &[0.0, 7.0, 15.0, 15.0, 0.0]);
    }

    #[test]
    fn zero_point_dequantizes_to_zero() {
        let p = UniformParams::new(0.3, 5, 4).unwrap();
        assert_eq!(dequant_code(&p, 5), 0.0);
        let t = uniform_quant(&m(&[0.0]), &p);
        assert_eq!(t.codes(), &[5]);
    }

    #[test]
    fn rounding_bound() {
        let p = uniform_params_from_bounds(-1.3, 2.2, 5).unwrap();
        let (lo, hi) = p.range();
        let xs: Vec<f64> = (0..200).map(|i| -1.2 + 3.3 * i as f64 / 199.0).collect();
        let x = m(&xs);
        let back = uniform_dequant(&uniform_quant(&x, &p));
        for (a, b) in x.data().iter().zip(back.data()) {
            if *a >= lo && *a <= hi {
                assert!((a - b).abs() <= p.scale / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn bounds_bridge() {
        let p = uniform_params_from_bounds(0.0, 15.0, 4).unwrap();
        assert_eq!((p.scale, p.zero_point), (1.0, 0));
        let p = uniform_params_from_bounds(-8.0, 7.0, 4).unwrap();
        assert_eq!((p.scale, p.zero_point), (1.0, 8));
        let (lo, hi) = p.range();
        assert!(lo <= -8.0 + p.scale && hi >= 7.0 - p.scale);
        let p = uniform_params_from_bounds(1.0, 3.0, 8).unwrap();
        assert_eq!(p.zero_point, 0);
        assert!(p.range().1 >= 3.0 - 1e-12);
        assert!(uniform_params_from_bounds(1.0, 1.0, 4).is_err());
        assert!(uniform_params_from_bounds(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(UniformParams::new(0.0, 0, 4).is_err());
        assert!(UniformParams::new(1.0, 16, 4).is_err());
        assert!(UniformParams::new(1.0, 0, 1).is_err());
    }
}
