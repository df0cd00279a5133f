//! Matmul inference paths on quantized operands and the FixOP cost model.
//!
//! - [`int_matmul_uniform`]: integer accumulation of zero-point-corrected
//!   codes, one scalar rescale.
//! - [`float_matmul_logsqrt2`]: the log√2 path, which has to materialize an
//!   element-wise float scale before the product.
//! - [`int_matmul_adalog`]: mantissa-table lookup, shift-table lookup and an
//!   integer multiply-accumulate, aligned to a per-row common exponent.

use serde::{Deserialize, Serialize};

use crate::error::{QkitError, Result};
use crate::numeric::{matmul, Matrix};
use crate::quant::{
    logsqrt2_dequant, max_code, uniform_dequant, AdaLogTables, LogBase, QuantParams, QuantizedTensor, UniformParams,
};

const NARROW_BUDGET_BITS: u32 = 62;

#[derive(Debug, Clone, PartialEq)]
pub struct MatmulResult {
    pub values: Matrix,
    pub fixops: f64,
    pub float_mul_count: u64,
}

/// FixOP accounting: an `a`-bit × `b`-bit integer multiply costs
/// `(a/8)·(b/8)`; table lookups and shifts are free; a float multiply costs
/// `float_mul_fixops`. Output rescaling is common to every path and is not
/// counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub float_mul_fixops: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { float_mul_fixops: 4.0 }
    }
}

impl CostModel {
    pub fn new(float_mul_fixops: f64) -> Result<Self> {
        if float_mul_fixops.is_nan() || float_mul_fixops <= 1.0 {
            return Err(QkitError::InvalidParam(format!(
                "float multiply cost {float_mul_fixops} must exceed one 8x8 integer multiply"
            )));
        }
        Ok(Self { float_mul_fixops })
    }

    pub fn int_mul(&self, a_bits: u8, b_bits: u8) -> f64 {
        (a_bits as f64 / 8.0) * (b_bits as f64 / 8.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Uniform,
    Log2,
    Logsqrt2,
    Adalog,
}

impl std::str::FromStr for PathKind {
    type Err = QkitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "log2" => Ok(Self::Log2),
            "logsqrt2" => Ok(Self::Logsqrt2),
            "adalog" => Ok(Self::Adalog),
            _ => Err(QkitError::InvalidParam(format!("unknown path '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatmulShape {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixOpsReport {
    pub path: PathKind,
    pub bits: [u8; 2],
    pub shape: [usize; 3],
    pub fixops: f64,
    pub float_muls: u64,
}

/// Cost of one `m×k · k×n` product on the given path.
///
/// - uniform: `mkn` multiplies of `a_bits × b_bits`
/// - adalog: `mkn` multiplies of a `(a_bits+1)`-bit mantissa by a `b_bits` code
/// - log2: shift-accumulate only, no multiplies
/// - logsqrt2: `mk` float multiplies for the element-wise scale plus `mkn`
///   float × integer multiplies
pub fn fixops_report(shape: MatmulShape, path: PathKind, a_bits: u8, b_bits: u8, cost: &CostModel) -> FixOpsReport {
    let MatmulShape { m, k, n } = shape;
    let mkn = (m * k * n) as f64;
    let (fixops, float_muls) = match path {
        PathKind::Uniform => (mkn * cost.int_mul(a_bits, b_bits), 0),
        PathKind::Adalog => (mkn * cost.int_mul(a_bits + 1, b_bits), 0),
        PathKind::Log2 => (0.0, 0),
        PathKind::Logsqrt2 => {
            let muls = (m * k + m * k * n) as u64;
            (muls as f64 * cost.float_mul_fixops, muls)
        }
    };
    FixOpsReport { path, bits: [a_bits, b_bits], shape: [m, k, n], fixops, float_muls }
}

fn check_inner(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<MatmulShape> {
    if a.cols() != b.rows() {
        return Err(QkitError::Shape(format!(
            "quantized matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(MatmulShape { m: a.rows(), k: a.cols(), n: b.cols() })
}

fn col_params(b: &QuantizedTensor) -> Result<Vec<UniformParams>> {
    (0..b.cols())
        .map(|j| {
            b.uniform_for_col(j)
                .ok_or_else(|| QkitError::InvalidParam("right operand must be uniform per-tensor or per-column".into()))
        })
        .collect()
}

fn bits_for(v: u128) -> u32 {
    128 - v.leading_zeros()
}

/// Worst-case `|Σ (a−zA)(b−zB)|` for the linear path.
pub fn uniform_worst_case(k: usize, a_bits: u8, b_bits: u8) -> u128 {
    k as u128 * max_code(a_bits) as u128 * max_code(b_bits) as u128
}

/// Linear path: `sA·sB · Σ (codeA − zA)(codeB − zB)` with `i64` accumulation.
pub fn int_matmul_uniform(aq: &QuantizedTensor, bq: &QuantizedTensor) -> Result<MatmulResult> {
    let shape = check_inner(aq, bq)?;
    let a_params: Vec<UniformParams> = (0..aq.rows())
        .map(|i| {
            aq.uniform_for_row(i)
                .ok_or_else(|| QkitError::InvalidParam("left operand must be uniform per-tensor or per-row".into()))
        })
        .collect::<Result<_>>()?;
    let b_params = col_params(bq)?;
    let worst = uniform_worst_case(shape.k, aq.bit(), bq.bit());
    if worst > 1u128 << NARROW_BUDGET_BITS {
        return Err(QkitError::Overflow { worst });
    }
    let MatmulShape { m, k, n } = shape;
    let b_centered: Vec<i64> =
        (0..k * n).map(|idx| bq.codes()[idx] as i64 - b_params[idx % n].zero_point as i64).collect();
    let mut out = vec![0.0; m * n];
    let mut acc = vec![0i64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0);
        let za = a_params[i].zero_point as i64;
        for p in 0..k {
            let da = aq.code(i, p) as i64 - za;
            if da == 0 {
                continue;
            }
            for (o, &db) in acc.iter_mut().zip(&b_centered[p * n..(p + 1) * n]) {
                *o += da * db;
            }
        }
        for j in 0..n {
            out[i * n + j] = (a_params[i].scale * b_params[j].scale) * acc[j] as f64;
        }
    }
    let report = fixops_report(shape, PathKind::Uniform, aq.bit(), bq.bit(), &CostModel::default());
    Ok(MatmulResult { values: Matrix::from_parts(m, n, out), fixops: report.fixops, float_mul_count: 0 })
}

/// The log√2 path: materialize `S̃ ∘ 2^⌊−code/2⌋` (one float multiply per
/// element) and multiply with the de-quantized right operand.
pub fn float_matmul_logsqrt2(aq: &QuantizedTensor, bq: &QuantizedTensor) -> Result<MatmulResult> {
    let shape = check_inner(aq, bq)?;
    let p = match aq.single_params() {
        Some(QuantParams::Log(p)) if p.base == LogBase::SqrtTwo => *p,
        _ => return Err(QkitError::InvalidParam("left operand must come from the log√2 quantizer".into())),
    };
    col_params(bq)?;
    let a_hat = logsqrt2_dequant(aq, &p);
    let values = matmul(&a_hat, &uniform_dequant(bq))?;
    let report = fixops_report(shape, PathKind::Logsqrt2, aq.bit(), bq.bit(), &CostModel::default());
    Ok(MatmulResult { values, fixops: report.fixops, float_mul_count: report.float_muls })
}

/// Accumulator width policy for the AdaLog path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccumulatorMode {
    /// `i64` when the row's alignment span fits in 62 bits, wide otherwise.
    #[default]
    Auto,
    /// Strict 64-bit: rows that could exceed 2^62 are an overflow error.
    Narrow64,
    /// Always use the wide accumulator.
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Shift every term left to the row's largest shift; exact.
    #[default]
    Exact,
    /// Right-shift each term before accumulation (floor); loses low bits.
    Truncating,
}

const WIDE_LIMBS: usize = 10;

/// Fixed-width two's-complement integer (640 bits) for exact alignment of
/// very wide exponent spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WideAcc {
    limbs: [u64; WIDE_LIMBS],
}

impl Default for WideAcc {
    fn default() -> Self {
        Self { limbs: [0; WIDE_LIMBS] }
    }
}

impl WideAcc {
    pub const BITS: u32 = 64 * WIDE_LIMBS as u32;

    /// Adds `v · 2^shift`. The caller guarantees the result stays in range.
    pub fn add_shifted(&mut self, v: i64, shift: u32) {
        if v == 0 {
            return;
        }
        let limb = (shift / 64) as usize;
        let off = shift % 64;
        let wide = (v as i128) << off;
        let parts = [wide as u64, (wide >> 64) as u64];
        let ext = if v < 0 { u64::MAX } else { 0 };
        let mut carry = 0u64;
        for (idx, slot) in self.limbs.iter_mut().enumerate().skip(limb) {
            let add = if idx - limb < 2 { parts[idx - limb] } else { ext };
            let (s1, c1) = slot.overflowing_add(add);
            let (s2, c2) = s1.overflowing_add(carry);
            *slot = s2;
            carry = (c1 as u64) + (c2 as u64);
        }
    }

    pub fn is_negative(&self) -> bool {
        self.limbs[WIDE_LIMBS - 1] >> 63 == 1
    }

    /// Little-endian two's-complement limbs.
    pub fn limbs(&self) -> &[u64; WIDE_LIMBS] {
        &self.limbs
    }

    fn magnitude(&self) -> [u64; WIDE_LIMBS] {
        if !self.is_negative() {
            return self.limbs;
        }
        let mut out = [0u64; WIDE_LIMBS];
        let mut carry = 1u64;
        for (o, &l) in out.iter_mut().zip(&self.limbs) {
            let (s, c) = (!l).overflowing_add(carry);
            *o = s;
            carry = c as u64;
        }
        out
    }

    pub fn to_f64(&self) -> f64 {
        let mag = self.magnitude();
        let v = mag.iter().rev().fold(0.0, |acc, &l| acc * 2f64.powi(64) + l as f64);
        if self.is_negative() {
            -v
        } else {
            v
        }
    }

    pub fn from_i64(v: i64) -> Self {
        let mut w = Self::default();
        w.add_shifted(v, 0);
        w
    }
}

/// Exact integer accumulators of the AdaLog path.
///
/// Output `(i, j)` equals `s·s'_j·s_table·2^(−row_shift[i])·acc(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdalogAccumulators {
    pub rows: usize,
    pub cols: usize,
    /// `M_i`, the largest shift in row `i` of the left operand.
    pub row_shift: Vec<u32>,
    pub acc: Vec<WideAcc>,
    /// Whether each row used the narrow `i64` accumulator.
    pub narrow: Vec<bool>,
}

struct AdalogOperands<'a> {
    scale: f64,
    shape: MatmulShape,
    tables: &'a AdaLogTables,
    b_params: Vec<UniformParams>,
}

fn adalog_operands<'a>(
    aq: &QuantizedTensor,
    tables: &'a AdaLogTables,
    bq: &QuantizedTensor,
) -> Result<AdalogOperands<'a>> {
    let shape = check_inner(aq, bq)?;
    let scale = match aq.single_params() {
        Some(QuantParams::AdaLog(p)) => p.scale,
        Some(QuantParams::Log(p)) if p.base == LogBase::Two => p.scale,
        _ => return Err(QkitError::InvalidParam("left operand must come from the AdaLog or log2 quantizer".into())),
    };
    if tables.bit != aq.bit() {
        return Err(QkitError::InvalidParam(format!("tables built for {} bits, operand has {}", tables.bit, aq.bit())));
    }
    Ok(AdalogOperands { scale, shape, tables, b_params: col_params(bq)? })
}

/// Integer accumulation of the AdaLog path with exact per-row alignment.
pub fn adalog_accumulate(
    aq: &QuantizedTensor,
    tables: &AdaLogTables,
    bq: &QuantizedTensor,
    mode: AccumulatorMode,
) -> Result<AdalogAccumulators> {
    let ops = adalog_operands(aq, tables, bq)?;
    accumulate_exact(aq, &ops, bq, mode)
}

fn accumulate_exact(
    aq: &QuantizedTensor,
    ops: &AdalogOperands<'_>,
    bq: &QuantizedTensor,
    mode: AccumulatorMode,
) -> Result<AdalogAccumulators> {
    let MatmulShape { m, k, n } = ops.shape;
    let t = ops.tables;
    let b_max =
        ops.b_params.iter().map(|p| p.zero_point.max(max_code(p.bit) - p.zero_point) as u128).max().unwrap_or(0);
    let mant_max = t.mantissa.iter().copied().max().unwrap_or(0) as u128;
    let b_centered: Vec<i64> =
        (0..k * n).map(|idx| bq.codes()[idx] as i64 - ops.b_params[idx % n].zero_point as i64).collect();

    let mut row_shift = Vec::with_capacity(m);
    let mut narrow_rows = Vec::with_capacity(m);
    let mut acc = vec![WideAcc::default(); m * n];
    let mut narrow = vec![0i64; n];
    for i in 0..m {
        let shifts: Vec<u32> = (0..k).map(|p| t.shift[aq.code(i, p) as usize]).collect();
        let hi = shifts.iter().copied().max().unwrap_or(0);
        let lo = shifts.iter().copied().min().unwrap_or(0);
        // worst |acc| < k · mant_max · b_max · 2^(hi − lo)
        let base = k as u128 * mant_max * b_max;
        let needed = bits_for(base) + (hi - lo);
        let use_narrow = match mode {
            AccumulatorMode::Narrow64 => {
                if needed > NARROW_BUDGET_BITS {
                    let worst = base.checked_shl(hi - lo).filter(|w| w >> (hi - lo) == base).unwrap_or(u128::MAX);
                    return Err(QkitError::Overflow { worst });
                }
                true
            }
            AccumulatorMode::Auto => needed <= NARROW_BUDGET_BITS,
            AccumulatorMode::Wide => false,
        };
        if !use_narrow && needed >= WideAcc::BITS {
            return Err(QkitError::Overflow { worst: u128::MAX });
        }
        row_shift.push(hi);
        narrow_rows.push(use_narrow);

        if use_narrow {
            narrow.iter_mut().for_each(|v| *v = 0);
            for (p, &s) in shifts.iter().enumerate() {
                let mant = t.mantissa[aq.code(i, p) as usize] as i64;
                let lift = hi - s;
                for (o, &db) in narrow.iter_mut().zip(&b_centered[p * n..(p + 1) * n]) {
                    *o += (mant * db) << lift;
                }
            }
            for j in 0..n {
                acc[i * n + j] = WideAcc::from_i64(narrow[j]);
            }
        } else {
            for (p, &s) in shifts.iter().enumerate() {
                let mant = t.mantissa[aq.code(i, p) as usize] as i64;
                let lift = hi - s;
                for j in 0..n {
                    acc[i * n + j].add_shifted(mant * b_centered[p * n + j], lift);
                }
            }
        }
    }
    Ok(AdalogAccumulators { rows: m, cols: n, row_shift, acc, narrow: narrow_rows })
}

/// AdaLog path with exact alignment and automatic accumulator width.
pub fn int_matmul_adalog(aq: &QuantizedTensor, tables: &AdaLogTables, bq: &QuantizedTensor) -> Result<MatmulResult> {
    int_matmul_adalog_with(aq, tables, bq, AlignMode::Exact, AccumulatorMode::Auto)
}

pub fn int_matmul_adalog_with(
    aq: &QuantizedTensor,
    tables: &AdaLogTables,
    bq: &QuantizedTensor,
    align: AlignMode,
    mode: AccumulatorMode,
) -> Result<MatmulResult> {
    let ops = adalog_operands(aq, tables, bq)?;
    let MatmulShape { m, k, n } = ops.shape;
    let s_table = tables.s_table();
    let mut out = vec![0.0; m * n];
    match align {
        AlignMode::Exact => {
            let accs = accumulate_exact(aq, &ops, bq, mode)?;
            for i in 0..m {
                let row_scale = 2f64.powi(-(accs.row_shift[i] as i32));
                for j in 0..n {
                    let v = accs.acc[i * n + j].to_f64();
                    out[i * n + j] = ops.scale * ops.b_params[j].scale * s_table * (v * row_scale);
                }
            }
        }
        AlignMode::Truncating => {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0i64;
                    for p in 0..k {
                        let c = aq.code(i, p) as usize;
                        let db = bq.code(p, j) as i64 - ops.b_params[j].zero_point as i64;
                        acc += (tables.mantissa[c] as i64 * db) >> tables.shift[c].min(63);
                    }
                    out[i * n + j] = ops.scale * ops.b_params[j].scale * s_table * acc as f64;
                }
            }
        }
    }
    let report = fixops_report(ops.shape, PathKind::Adalog, aq.bit(), bq.bit(), &CostModel::default());
    Ok(MatmulResult { values: Matrix::from_parts(m, n, out), fixops: report.fixops, float_mul_count: 0 })
}
