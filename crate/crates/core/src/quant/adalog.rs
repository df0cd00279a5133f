//! Adaptive-base logarithmic quantizer.
//!
//! The base is `b = 2^(q/r)` for integers `q, r`. Codes follow
//! `clamp(⌊−log_b(a/s)⌉, 0, 2^bit−1)`; de-quantization splits `q·code` into a
//! quotient (a right shift) and a remainder whose power `2^(−rem/r)` is
//! looked up in a small integer table with scale `1 / (2·(2^bit − 1))`.

use serde::{Deserialize, Serialize};

use super::{check_bit, log_code, max_code, pow2_neg, QuantParams, QuantizedTensor, TensorParams};
use crate::error::{QkitError, Result};
use crate::numeric::Matrix;

/// Default denominator of the rational base exponent.
pub const DEFAULT_R: u32 = 37;

pub fn is_prime(n: u32) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Whether `q` is admissible for denominator `r`: coprime with `r`, or `q == r`.
pub fn valid_q(q: u32, r: u32) -> bool {
    q >= 1 && (q == r || gcd(q, r) == 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaLogParams {
    pub scale: f64,
    pub q: u32,
    pub r: u32,
    pub bit: u8,
}

impl AdaLogParams {
    pub fn new(scale: f64, q: u32, r: u32, bit: u8) -> Result<Self> {
        check_bit(bit)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QkitError::InvalidParam(format!("AdaLog scale {scale} must be positive")));
        }
        if !is_prime(r) {
            return Err(QkitError::InvalidParam(format!("AdaLog r = {r} must be prime")));
        }
        if !valid_q(q, r) {
            return Err(QkitError::InvalidParam(format!("AdaLog q = {q} must be coprime with r = {r} or equal to it")));
        }
        Ok(Self { scale, q, r, bit })
    }

    /// The implied logarithm base `2^(q/r)`.
    pub fn base(&self) -> f64 {
        (self.q as f64 / self.r as f64).exp2()
    }

    #[inline]
    pub fn code(&self, a: f64) -> u8 {
        // q == r gives ratio exactly 1.0, so codes coincide with log2
        log_code(a, self.scale, self.code_mult(), max_code(self.bit))
    }

    /// Converts `−log2(a/s)` into code units.
    #[inline]
    pub(crate) fn code_mult(&self) -> f64 {
        self.r as f64 / self.q as f64
    }

    /// Ideal de-quantized value `s · 2^(−q·code/r)`.
    #[inline]
    pub fn dequant_code(&self, code: u8) -> f64 {
        let qc = self.q * code as u32;
        let (shift, rem) = (qc / self.r, qc % self.r);
        self.scale * pow2_neg(shift) * (-(rem as f64) / self.r as f64).exp2()
    }
}

/// Shift and quantized-mantissa lookup tables for one `(q, r, bit)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaLogTables {
    pub bit: u8,
    /// `⌊q·c / r⌋`
    pub shift: Vec<u32>,
    /// `⌊2^(−((q·c) mod r)/r) / s_table⌉`
    pub mantissa: Vec<u32>,
}

impl AdaLogTables {
    /// `1 / (2·(2^bit − 1))`
    pub fn s_table(&self) -> f64 {
        1.0 / self.mantissa_denominator() as f64
    }

    pub(crate) fn mantissa_denominator(&self) -> u32 {
        2 * max_code(self.bit) as u32
    }

    pub fn len(&self) -> usize {
        self.shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shift.is_empty()
    }

    pub fn max_shift(&self) -> u32 {
        self.shift.last().copied().unwrap_or(0)
    }

    /// Table-path value for one code, `s · s_table · mantissa · 2^(−shift)`.
    #[inline]
    pub fn dequant_code(&self, code: u8, scale: f64) -> f64 {
        let c = code as usize;
        scale * self.s_table() * (self.mantissa[c] as f64 * pow2_neg(self.shift[c]))
    }
}

pub fn build_adalog_tables(p: &AdaLogParams) -> AdaLogTables {
    let n = 1u32 << p.bit;
    let denom = (2 * max_code(p.bit) as u32) as f64;
    let (shift, mantissa) = (0..n)
        .map(|c| {
            let qc = p.q * c;
            let rem = qc % p.r;
            let m = ((-(rem as f64) / p.r as f64).exp2() * denom).round() as u32;
            (qc / p.r, m)
        })
        .unzip();
    AdaLogTables { bit: p.bit, shift, mantissa }
}

pub fn adalog_quant(a: &Matrix, p: &AdaLogParams) -> QuantizedTensor {
    let codes = a.data().iter().map(|&v| p.code(v)).collect();
    QuantizedTensor::from_parts(a.rows(), a.cols(), codes, p.bit, TensorParams::PerTensor(QuantParams::AdaLog(*p)))
}

/// Ideal de-quantization `s · 2^(−q·code/r)` without the mantissa table.
pub fn adalog_dequant_reference(t: &QuantizedTensor, p: &AdaLogParams) -> Matrix {
    Matrix::from_parts(t.rows(), t.cols(), t.codes().iter().map(|&c| p.dequant_code(c)).collect())
}

/// Table-path de-quantization, the real-valued image of the integer kernel.
pub fn adalog_dequant_via_tables(t: &QuantizedTensor, tables: &AdaLogTables, scale: f64) -> Matrix {
    assert_eq!(t.bit(), tables.bit, "table bit-width does not match tensor");
    Matrix::from_parts(t.rows(), t.cols(), t.codes().iter().map(|&c| tables.dequant_code(c, scale)).collect())
}
