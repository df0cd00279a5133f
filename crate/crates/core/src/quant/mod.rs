//! Quantizers: asymmetric uniform, fixed-base log2 / log√2, and AdaLog.
//!
//! Every `⌊·⌉` is round-half-away-from-zero ([`f64::round`]). Non-positive
//! inputs to the log-family quantizers map to the largest code (smallest
//! representable magnitude); inputs above the scale clamp to code 0.

mod adalog;
mod log;
mod params;
mod tensor;
mod uniform;

pub use adalog::{
    adalog_dequant_reference, adalog_dequant_via_tables, adalog_quant, build_adalog_tables, is_prime, valid_q,
    AdaLogParams, AdaLogTables, DEFAULT_R,
};
pub use log::{log2_dequant, log2_quant, logsqrt2_dequant, logsqrt2_quant, LogBase, LogFixedParams};
pub use params::{check_bit, max_code, ParamsRecord, QuantParams, QuantizerKind};
pub use tensor::{QuantizedTensor, TensorParams};
pub use uniform::{uniform_dequant, uniform_params_from_bounds, uniform_quant, UniformParams};

use crate::numeric::Matrix;

/// Quantizes with any single (per-tensor) quantizer.
pub fn quantize(x: &Matrix, params: &QuantParams) -> QuantizedTensor {
    match params {
        QuantParams::Uniform(p) => uniform_quant(x, p),
        QuantParams::Log(p) => match p.base {
            LogBase::Two => log2_quant(x, p),
            LogBase::SqrtTwo => logsqrt2_quant(x, p),
        },
        QuantParams::AdaLog(p) => adalog_quant(x, p),
    }
}

/// Quantize then de-quantize. AdaLog uses the table path, which is what the
/// integer kernels compute.
pub fn fake_quant(x: &Matrix, params: &QuantParams) -> Matrix {
    let data = match params {
        // same arithmetic as the table entry, without the table
        QuantParams::Uniform(p) => {
            let zp = p.zero_point as f64;
            x.data().iter().map(|&v| p.scale * (p.code_f64(v) - zp)).collect()
        }
        QuantParams::Log(p) => lookup(x, &dequant_lut(params), |v| p.code(v)),
        QuantParams::AdaLog(p) => lookup(x, &dequant_lut(params), |v| p.code(v)),
    };
    Matrix::from_parts(x.rows(), x.cols(), data)
}

fn lookup(x: &Matrix, lut: &[f64], code: impl Fn(f64) -> u8) -> Vec<f64> {
    x.data().iter().map(|&v| lut[code(v) as usize]).collect()
}

/// De-quantized value of every code `0..2^bit`, AdaLog through its tables.
pub fn dequant_lut(params: &QuantParams) -> Vec<f64> {
    let codes = 0..=max_code(params.bit());
    match params {
        QuantParams::AdaLog(p) => {
            let tables = build_adalog_tables(p);
            codes.map(|c| tables.dequant_code(c, p.scale)).collect()
        }
        _ => codes.map(|c| params.dequant_code(c)).collect(),
    }
}

/// Maps a value to a log-family code. `mult` converts `−log2(a/s)` into code
/// units (1 for base 2, 2 for base √2, r/q for AdaLog).
#[inline]
pub(crate) fn log_code(a: f64, scale: f64, mult: f64, max: u8) -> u8 {
    log_code_from(neg_log(a, scale), mult, max)
}

/// `−log2(a/s)`, or `+∞` for `a ≤ 0` (which then maps to the max code).
#[inline]
pub(crate) fn neg_log(a: f64, scale: f64) -> f64 {
    if a > 0.0 {
        -(a / scale).log2()
    } else {
        f64::INFINITY
    }
}

/// The second half of [`log_code`], for callers that reuse `neg_log`.
#[inline]
pub(crate) fn log_code_from(neg_log: f64, mult: f64, max: u8) -> u8 {
    let v = round_half_away(neg_log * mult);
    if v <= 0.0 {
        0
    } else if v >= max as f64 {
        max
    } else {
        v as u8
    }
}

/// Same result as [`f64::round`] (including at halves and signed zeros)
/// without a libm call.
#[inline]
pub(crate) fn round_half_away(v: f64) -> f64 {
    // 2^52: adding and subtracting it rounds to an integer, ties to even;
    // at or above it every f64 is already an integer
    const M: f64 = 4_503_599_627_370_496.0;
    let a = v.abs();
    if a < M {
        let r = (a + M) - M;
        let r = if r - a == -0.5 { r + 1.0 } else { r };
        r.copysign(v)
    } else {
        v
    }
}

#[inline]
pub(crate) fn pow2_neg(e: u32) -> f64 {
    2f64.powi(-(e as i32))
}
