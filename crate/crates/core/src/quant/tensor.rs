use super::{
    adalog_dequant_reference, log2_dequant, logsqrt2_dequant, uniform::dequant_code, LogBase, QuantParams,
    UniformParams,
};
use crate::error::{QkitError, Result};
use crate::numeric::Matrix;

/// How the codes of a [`QuantizedTensor`] map back to reals.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorParams {
    PerTensor(QuantParams),
    /// One uniform quantizer per row (output channel of a weight matrix).
    PerRow(Vec<UniformParams>),
    /// One uniform quantizer per column; the transpose of `PerRow`.
    PerCol(Vec<UniformParams>),
}

/// Integer codes plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    codes: Vec<u8>,
    bit: u8,
    params: TensorParams,
}

impl QuantizedTensor {
    pub fn new(rows: usize, cols: usize, codes: Vec<u8>, bit: u8, params: TensorParams) -> Result<Self> {
        if codes.len() != rows * cols {
            return Err(QkitError::Shape(format!("{} codes for {rows}x{cols}", codes.len())));
        }
        let max = super::max_code(bit);
        if let Some(c) = codes.iter().find(|&&c| c > max) {
            return Err(QkitError::InvalidParam(format!("code {c} exceeds {max} at {bit} bits")));
        }
        match &params {
            TensorParams::PerRow(v) if v.len() != rows => {
                return Err(QkitError::Shape(format!("{} row params for {rows} rows", v.len())))
            }
            TensorParams::PerCol(v) if v.len() != cols => {
                return Err(QkitError::Shape(format!("{} column params for {cols} columns", v.len())))
            }
            _ => {}
        }
        Ok(Self { rows, cols, codes, bit, params })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, codes: Vec<u8>, bit: u8, params: TensorParams) -> Self {
        Self { rows, cols, codes, bit, params }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    #[inline]
    pub fn code(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.cols + j]
    }

    pub fn bit(&self) -> u8 {
        self.bit
    }

    pub fn params(&self) -> &TensorParams {
        &self.params
    }

    /// The per-tensor quantizer, if this tensor has one.
    pub fn single_params(&self) -> Option<&QuantParams> {
        match &self.params {
            TensorParams::PerTensor(p) => Some(p),
            _ => None,
        }
    }

    /// Uniform parameters governing column `j`, when the tensor is uniform and
    /// not per-row.
    pub(crate) fn uniform_for_col(&self, j: usize) -> Option<UniformParams> {
        match &self.params {
            TensorParams::PerTensor(QuantParams::Uniform(p)) => Some(*p),
            TensorParams::PerCol(v) => Some(v[j]),
            _ => None,
        }
    }

    pub(crate) fn uniform_for_row(&self, i: usize) -> Option<UniformParams> {
        match &self.params {
            TensorParams::PerTensor(QuantParams::Uniform(p)) => Some(*p),
            TensorParams::PerRow(v) => Some(v[i]),
            _ => None,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut codes = Vec::with_capacity(self.codes.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                codes.push(self.code(i, j));
            }
        }
        let params = match &self.params {
            TensorParams::PerTensor(p) => TensorParams::PerTensor(*p),
            TensorParams::PerRow(v) => TensorParams::PerCol(v.clone()),
            TensorParams::PerCol(v) => TensorParams::PerRow(v.clone()),
        };
        Self::from_parts(self.cols, self.rows, codes, self.bit, params)
    }

    /// Number of elements holding each code `0..2^bit`.
    pub fn code_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; 1usize << self.bit];
        for &c in &self.codes {
            counts[c as usize] += 1;
        }
        counts
    }

    /// De-quantizes with the ideal formula of the producing quantizer
    /// (for AdaLog, `s · 2^(−q·code/r)` without the mantissa table).
    pub fn dequantize(&self) -> Matrix {
        match &self.params {
            TensorParams::PerTensor(QuantParams::Uniform(_)) => super::uniform_dequant(self),
            TensorParams::PerTensor(QuantParams::Log(p)) => match p.base {
                LogBase::Two => log2_dequant(self, p),
                LogBase::SqrtTwo => logsqrt2_dequant(self, p),
            },
            TensorParams::PerTensor(QuantParams::AdaLog(p)) => adalog_dequant_reference(self, p),
            TensorParams::PerRow(v) => {
                Matrix::from_fn(self.rows, self.cols, |i, j| dequant_code(&v[i], self.code(i, j)))
            }
            TensorParams::PerCol(v) => {
                Matrix::from_fn(self.rows, self.cols, |i, j| dequant_code(&v[j], self.code(i, j)))
            }
        }
    }
}
