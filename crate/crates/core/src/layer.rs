//! Quantized layers: linear layers on the integer paths, the post-GELU
//! shift with bias compensation, and the attention probability × value
//! product.

use serde::{Deserialize, Serialize};

use crate::error::{QkitError, Result};
use crate::kernels::{float_matmul_logsqrt2, int_matmul_adalog, int_matmul_uniform, MatmulResult};
use crate::numeric::Matrix;
use crate::quant::{
    build_adalog_tables, check_bit, fake_quant, quantize, uniform_params_from_bounds, uniform_quant, AdaLogParams,
    LogBase, QuantParams, QuantizedTensor, QuantizerKind, TensorParams, UniformParams, DEFAULT_R,
};

/// Constant added to post-GELU activations so they become non-negative.
pub const GELU_SHIFT: f64 = 0.17;

/// Smallest weight scale used for an all-zero channel.
pub const MIN_WEIGHT_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Generic,
    PostGelu,
}

/// Per-layer quantization settings as they appear in block configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub bit_w: u8,
    pub bit_a: u8,
    pub quantizer: QuantizerKind,
    /// Fixed activation parameters; searched during calibration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<QuantParams>,
}

/// `Y = X · Wᵀ + b` with `W` of shape `out × in`; rows of `X` are tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub kind: LayerKind,
}

impl LinearLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, kind: LayerKind) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(QkitError::Shape(format!(
                "bias of length {} for {} output channels",
                bias.len(),
                weight.rows()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(QkitError::InvalidParam("non-finite bias".into()));
        }
        Ok(Self { weight, bias, kind })
    }

    pub fn in_features(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        linear(x, &self.weight, &self.bias)
    }
}

/// `x · wᵀ + b`.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if x.cols() != w.cols() {
        return Err(QkitError::Shape(format!("linear input has {} features, weight expects {}", x.cols(), w.cols())));
    }
    // same summation order as a row-by-row dot product
    crate::numeric::matmul(x, &w.transpose())?.add_row_vector(b)
}

/// `x + 0.17` element-wise.
pub fn reparam_shift(x: &Matrix) -> Matrix {
    x.add_scalar(GELU_SHIFT)
}

/// `b − 0.17 · (Ŵ · 1)`, computed from the de-quantized weight.
pub fn reparam_bias(b: &[f64], w_hat: &Matrix) -> Result<Vec<f64>> {
    if b.len() != w_hat.rows() {
        return Err(QkitError::Shape(format!("bias of length {} for {} rows", b.len(), w_hat.rows())));
    }
    Ok(b.iter().zip(w_hat.row_sums()).map(|(bi, s)| bi - GELU_SHIFT * s).collect())
}

fn channel_params(row: &[f64], bit: u8) -> Result<UniformParams> {
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        return uniform_params_from_bounds(lo, hi, bit);
    }
    // constant channel: widen to include zero so the constant is a grid point
    if lo == 0.0 {
        UniformParams::new(MIN_WEIGHT_SCALE, 0, bit)
    } else {
        uniform_params_from_bounds(lo.min(0.0), lo.max(0.0), bit)
    }
}

/// Per-output-channel (row-wise) min/max uniform quantization.
pub fn quantize_weights_channelwise(w: &Matrix, bit: u8) -> Result<QuantizedTensor> {
    check_bit(bit)?;
    let params: Vec<UniformParams> = (0..w.rows()).map(|i| channel_params(w.row(i), bit)).collect::<Result<_>>()?;
    let mut codes = Vec::with_capacity(w.rows() * w.cols());
    for (i, p) in params.iter().enumerate() {
        codes.extend(w.row(i).iter().map(|&v| p.code(v)));
    }
    QuantizedTensor::new(w.rows(), w.cols(), codes, bit, TensorParams::PerRow(params))
}

/// Runs the hardware path matching the left operand's quantizer.
pub fn quantized_matmul(aq: &QuantizedTensor, bq: &QuantizedTensor) -> Result<MatmulResult> {
    match aq.single_params() {
        Some(QuantParams::Uniform(_)) => int_matmul_uniform(aq, bq),
        Some(QuantParams::AdaLog(p)) => int_matmul_adalog(aq, &build_adalog_tables(p), bq),
        Some(QuantParams::Log(p)) => match p.base {
            // base 2 is AdaLog with q = r: constant mantissa, pure shifts
            LogBase::Two => {
                let tables = build_adalog_tables(&AdaLogParams::new(p.scale, DEFAULT_R, DEFAULT_R, p.bit)?);
                int_matmul_adalog(aq, &tables, bq)
            }
            LogBase::SqrtTwo => float_matmul_logsqrt2(aq, bq),
        },
        None => int_matmul_uniform(aq, bq),
    }
}

/// Real-valued image of a quantized operand as the kernels see it (AdaLog
/// through its lookup tables).
pub fn kernel_dequant(t: &QuantizedTensor) -> Matrix {
    match t.single_params() {
        Some(QuantParams::AdaLog(p)) => crate::quant::adalog_dequant_via_tables(t, &build_adalog_tables(p), p.scale),
        _ => t.dequantize(),
    }
}

/// A linear layer with channel-wise quantized weights and a quantized input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLinearLayer {
    pub kind: LayerKind,
    /// Transposed weight codes (`in × out`, per-column parameters).
    weight_t: QuantizedTensor,
    w_hat: Matrix,
    pub bias_eff: Vec<f64>,
    pub activation: QuantParams,
    pub shift_delta: f64,
}

impl QuantizedLinearLayer {
    /// Quantizes the weights, then derives the effective bias from the
    /// de-quantized weights (the reparameterized bias for post-GELU layers).
    pub fn build(layer: &LinearLayer, bit_w: u8, activation: QuantParams) -> Result<Self> {
        let wq = quantize_weights_channelwise(&layer.weight, bit_w)?;
        let w_hat = wq.dequantize();
        let (bias_eff, shift_delta) = match layer.kind {
            LayerKind::Generic => (layer.bias.clone(), 0.0),
            LayerKind::PostGelu => (reparam_bias(&layer.bias, &w_hat)?, GELU_SHIFT),
        };
        Ok(Self { kind: layer.kind, weight_t: wq.transpose(), w_hat, bias_eff, activation, shift_delta })
    }

    /// Rebuilds a layer with a stored effective bias.
    pub fn with_bias(layer: &LinearLayer, bit_w: u8, activation: QuantParams, bias_eff: Vec<f64>) -> Result<Self> {
        let mut q = Self::build(layer, bit_w, activation)?;
        if bias_eff.len() != q.bias_eff.len() {
            return Err(QkitError::Shape(format!(
                "stored bias has length {}, layer has {} outputs",
                bias_eff.len(),
                q.bias_eff.len()
            )));
        }
        q.bias_eff = bias_eff;
        Ok(q)
    }

    /// De-quantized weight `Ŵ` (`out × in`).
    pub fn w_hat(&self) -> &Matrix {
        &self.w_hat
    }

    pub fn weight_codes_t(&self) -> &QuantizedTensor {
        &self.weight_t
    }

    /// Input actually handed to the activation quantizer.
    pub fn quantizer_input(&self, x: &Matrix) -> Matrix {
        if self.shift_delta == 0.0 {
            x.clone()
        } else {
            x.add_scalar(self.shift_delta)
        }
    }

    /// Float computation with de-quantized operands; the oracle for
    /// [`forward_quantized_linear`] and the calibration objective.
    pub fn forward_fake_quant(&self, x: &Matrix) -> Result<Matrix> {
        let x_hat = fake_quant(&self.quantizer_input(x), &self.activation);
        linear(&x_hat, &self.w_hat, &self.bias_eff)
    }
}

pub fn forward_quantized_linear(layer: &QuantizedLinearLayer, x: &Matrix) -> Result<Matrix> {
    let xq = quantize(&layer.quantizer_input(x), &layer.activation);
    let r = quantized_matmul(&xq, &layer.weight_t)?;
    r.values.add_row_vector(&layer.bias_eff)
}

/// Probability × value product with a log-family quantizer on the
/// probabilities and a uniform quantizer on the values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionMatmulLayer {
    pub probs: QuantParams,
    pub values: UniformParams,
}

impl AttentionMatmulLayer {
    pub fn new(probs: QuantParams, values: UniformParams) -> Result<Self> {
        if !probs.kind().is_log_family() {
            return Err(QkitError::InvalidParam("attention probabilities need a log-family quantizer".into()));
        }
        Ok(Self { probs, values })
    }

    pub fn forward_fake_quant(&self, probs: &Matrix, v: &Matrix) -> Result<Matrix> {
        crate::numeric::matmul(&fake_quant(probs, &self.probs), &fake_quant(v, &QuantParams::Uniform(self.values)))
    }
}

pub fn forward_attention_matmul(layer: &AttentionMatmulLayer, probs: &Matrix, v: &Matrix) -> Result<Matrix> {
    if probs.cols() != v.rows() {
        return Err(QkitError::Shape(format!(
            "probabilities {}x{} by values {}x{}",
            probs.rows(),
            probs.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let pq = quantize(probs, &layer.probs);
    let vq = uniform_quant(v, &layer.values);
    Ok(quantized_matmul(&pq, &vq)?.values)
}
