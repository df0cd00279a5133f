use serde::{Deserialize, Serialize};

use crate::calib::FpcsConfig;
use crate::error::{QkitError, Result};
use crate::layer::{LayerKind, LinearLayer};
use crate::numeric::synthetic::{gaussian_matrix, rng};
use crate::numeric::{gelu, matmul, softmax_rows, Matrix};
use crate::quant::{check_bit, is_prime, QuantizerKind, DEFAULT_R};

/// Standard deviation of the seeded biases.
pub const BIAS_STD: f64 = 0.1;

/// Shape, bit-widths and per-site quantizer choices of the toy block. The
/// QKV, MatMul1, Proj and FC1 sites always use the uniform quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyBlockConfig {
    pub embed_dim: usize,
    pub num_tokens: usize,
    pub mlp_ratio: usize,
    pub heads: usize,
    pub seed: u64,
    pub bit_w: u8,
    pub bit_a: u8,
    /// Quantizer for the attention probabilities.
    pub matmul2: QuantizerKind,
    /// Quantizer for the post-GELU input of FC2.
    pub fc2: QuantizerKind,
    pub r: u32,
    pub search: FpcsConfig,
}

impl Default for ToyBlockConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            num_tokens: 8,
            mlp_ratio: 4,
            heads: 1,
            seed: 0,
            bit_w: 4,
            bit_a: 4,
            matmul2: QuantizerKind::Adalog,
            fc2: QuantizerKind::Adalog,
            r: DEFAULT_R,
            search: FpcsConfig::default(),
        }
    }
}

impl ToyBlockConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QkitError::InvalidParam(m));
        if self.embed_dim == 0 || self.num_tokens == 0 || self.mlp_ratio == 0 || self.heads == 0 {
            return bad("block dimensions must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!("embed_dim {} is not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.heads != 1 {
            return bad("only single-head attention is supported".into());
        }
        check_bit(self.bit_w)?;
        check_bit(self.bit_a)?;
        if !self.matmul2.is_log_family() {
            return bad(format!("MatMul2 needs a log-family quantizer, got {}", self.matmul2));
        }
        if !is_prime(self.r) {
            return bad(format!("r = {} must be prime", self.r));
        }
        self.search.validate()
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }
}

/// One attention + MLP block without residuals or normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBlock {
    pub cfg: ToyBlockConfig,
    pub qkv: LinearLayer,
    pub proj: LinearLayer,
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

/// Every intermediate of a full-precision forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub input: Matrix,
    pub qkv_out: Matrix,
    pub query: Matrix,
    pub key: Matrix,
    pub values: Matrix,
    /// `Q·Kᵀ/√d`.
    pub scores: Matrix,
    pub probs: Matrix,
    pub attn: Matrix,
    pub proj_out: Matrix,
    pub fc1_out: Matrix,
    /// GELU output, the input of FC2.
    pub hidden: Matrix,
    pub output: Matrix,
}

/// Weights are `N(0, 1/fan_in)` (standard deviation `1/√fan_in`), biases
/// `N(0, BIAS_STD²)`, all drawn from one stream seeded by `cfg.seed`.
pub fn build_toy_block(cfg: &ToyBlockConfig) -> Result<ToyBlock> {
    cfg.validate()?;
    let mut rng = rng(cfg.seed);
    let (d, h) = (cfg.embed_dim, cfg.hidden_dim());
    let mut layer = |out: usize, inp: usize, kind| {
        let w = gaussian_matrix(&mut rng, out, inp, 1.0 / (inp as f64).sqrt());
        let b = gaussian_matrix(&mut rng, 1, out, BIAS_STD).into_data();
        LinearLayer::new(w, b, kind)
    };
    Ok(ToyBlock {
        qkv: layer(3 * d, d, LayerKind::Generic)?,
        proj: layer(d, d, LayerKind::Generic)?,
        fc1: layer(h, d, LayerKind::Generic)?,
        fc2: layer(d, h, LayerKind::PostGelu)?,
        cfg: cfg.clone(),
    })
}

impl ToyBlock {
    pub fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.cfg.num_tokens, self.cfg.embed_dim) {
            return Err(QkitError::Shape(format!(
                "block input must be {}x{}, got {}x{}",
                self.cfg.num_tokens,
                self.cfg.embed_dim,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn attention_scale(&self) -> f64 {
        1.0 / (self.cfg.embed_dim as f64).sqrt()
    }

    pub fn forward_fp(&self, x: &Matrix) -> Result<Activations> {
        self.check_input(x)?;
        let d = self.cfg.embed_dim;
        let qkv_out = self.qkv.forward(x)?;
        let query = qkv_out.col_slice(0, d)?;
        let key = qkv_out.col_slice(d, d)?;
        let values = qkv_out.col_slice(2 * d, d)?;
        let scores = matmul(&query, &key.transpose())?.scale(self.attention_scale());
        let probs = softmax_rows(&scores);
        let attn = matmul(&probs, &values)?;
        let proj_out = self.proj.forward(&attn)?;
        let fc1_out = self.fc1.forward(&proj_out)?;
        let hidden = gelu(&fc1_out);
        let output = self.fc2.forward(&hidden)?;
        Ok(Activations {
            input: x.clone(),
            qkv_out,
            query,
            key,
            values,
            scores,
            probs,
            attn,
            proj_out,
            fc1_out,
            hidden,
            output,
        })
    }
}

/// `count` Gaussian token matrices from one seeded stream.
pub fn calibration_set(cfg: &ToyBlockConfig, count: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = rng(seed);
    (0..count).map(|_| gaussian_matrix(&mut rng, cfg.num_tokens, cfg.embed_dim, 1.0)).collect()
}
