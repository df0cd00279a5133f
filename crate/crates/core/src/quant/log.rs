use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::{check_bit, log_code, max_code, pow2_neg, QuantParams, QuantizedTensor, TensorParams};
use crate::error::{QkitError, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogBase {
    Two,
    SqrtTwo,
}

/// Fixed-base logarithmic quantizer (base 2 or √2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFixedParams {
    pub scale: f64,
    pub bit: u8,
    pub base: LogBase,
}

impl LogFixedParams {
    pub fn new(scale: f64, bit: u8, base: LogBase) -> Result<Self> {
        check_bit(bit)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QkitError::InvalidParam(format!("log scale {scale} must be positive")));
        }
        Ok(Self { scale, bit, base })
    }

    fn mult(&self) -> f64 {
        match self.base {
            LogBase::Two => 1.0,
            LogBase::SqrtTwo => 2.0,
        }
    }

    #[inline]
    pub fn code(&self, a: f64) -> u8 {
        log_code(a, self.scale, self.mult(), max_code(self.bit))
    }

    #[inline]
    pub fn dequant_code(&self, code: u8) -> f64 {
        match self.base {
            LogBase::Two => self.scale * pow2_neg(code as u32),
            LogBase::SqrtTwo => reparam_scale(self.scale, code) * pow2_neg(code.div_ceil(2) as u32),
        }
    }
}

/// Element-wise reparameterized scale `s · (parity(code)·(√2 − 1) + 1)`.
#[inline]
pub(crate) fn reparam_scale(scale: f64, code: u8) -> f64 {
    if code % 2 == 1 {
        scale * SQRT_2
    } else {
        scale
    }
}

fn quant_with(a: &Matrix, p: &LogFixedParams) -> QuantizedTensor {
    let codes = a.data().iter().map(|&v| p.code(v)).collect();
    QuantizedTensor::from_parts(a.rows(), a.cols(), codes, p.bit, TensorParams::PerTensor(QuantParams::Log(*p)))
}

fn expect_base(p: &LogFixedParams, base: LogBase) {
    assert_eq!(p.base, base, "log quantizer called with the wrong base");
}

/// `clamp(⌊−log2(a/s)⌉, 0, 2^bit−1)`.
pub fn log2_quant(a: &Matrix, p: &LogFixedParams) -> QuantizedTensor {
    expect_base(p, LogBase::Two);
    quant_with(a, p)
}

/// `s · 2^(−code)`.
pub fn log2_dequant(t: &QuantizedTensor, p: &LogFixedParams) -> Matrix {
    expect_base(p, LogBase::Two);
    Matrix::from_parts(t.rows(), t.cols(), t.codes().iter().map(|&c| p.dequant_code(c)).collect())
}

/// `clamp(⌊−2·log2(a/s)⌉, 0, 2^bit−1)`.
pub fn logsqrt2_quant(a: &Matrix, p: &LogFixedParams) -> QuantizedTensor {
    expect_base(p, LogBase::SqrtTwo);
    quant_with(a, p)
}

/// `S̃ ∘ 2^⌊−code/2⌋`, which equals `s · √2^(−code)`.
pub fn logsqrt2_dequant(t: &QuantizedTensor, p: &LogFixedParams) -> Matrix {
    expect_base(p, LogBase::SqrtTwo);
    Matrix::from_parts(t.rows(), t.cols(), t.codes().iter().map(|&c| p.dequant_code(c)).collect())
}
