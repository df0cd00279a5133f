use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::block::ToyBlock;
use super::plan::{ActivationSite, LinearSitePlan, QuantPlan};
use crate::error::{QkitError, Result};
use crate::layer::quantized_matmul;
use crate::layer::{
    forward_attention_matmul, forward_quantized_linear, AttentionMatmulLayer, LinearLayer, QuantizedLinearLayer,
};
use crate::numeric::{cosine_similarity, gelu, mse, softmax_rows, sqnr_db, Matrix};
use crate::quant::{max_code, quantize, QuantParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub code: u8,
    /// De-quantized value of the code, in the quantizer's input domain.
    pub bin_center: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteHistogram {
    pub site: ActivationSite,
    pub bins: Vec<HistBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mse: f64,
    pub sqnr_db: f64,
    pub cosine: f64,
    pub histograms: Vec<SiteHistogram>,
}

/// Code counts for every code `0..2^bit` of a per-tensor quantizer.
pub fn histogram_bins(values: &Matrix, params: &QuantParams) -> Vec<HistBin> {
    let counts = quantize(values, params).code_histogram();
    (0..=max_code(params.bit()))
        .map(|code| HistBin { code, bin_center: params.dequant_code(code), count: counts[code as usize] })
        .collect()
}

/// Histogram of one site's quantizer input over full-precision passes of
/// the block on each matrix in `data`.
pub fn histogram_codes(
    block: &ToyBlock,
    plan: &QuantPlan,
    site: ActivationSite,
    data: &[Matrix],
) -> Result<Vec<HistBin>> {
    check_plan(block, plan)?;
    let params = plan.params_for(site);
    let mut total: Option<Vec<HistBin>> = None;
    for x in data {
        let bins = histogram_bins(&site.quantizer_input(&block.forward_fp(x)?), params);
        match &mut total {
            None => total = Some(bins),
            Some(t) => t.iter_mut().zip(&bins).for_each(|(acc, b)| acc.count += b.count),
        }
    }
    total.ok_or(QkitError::Empty("histogram data"))
}

pub fn histograms_csv(bins: &[HistBin]) -> String {
    let mut out = String::from("code,bin_center,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{}", b.code, b.bin_center, b.count);
    }
    out
}

fn check_plan(block: &ToyBlock, plan: &QuantPlan) -> Result<()> {
    if plan.config != block.cfg {
        return Err(QkitError::InvalidParam("plan was calibrated for a different block configuration".into()));
    }
    Ok(())
}

fn linear_layer(layer: &LinearLayer, bit_w: u8, site: &LinearSitePlan) -> Result<QuantizedLinearLayer> {
    QuantizedLinearLayer::with_bias(layer, bit_w, site.activation, site.bias.clone())
}

/// Runs every site through its integer (or, for log√2, float) kernel and
/// compares the result with the full-precision block on the same input.
pub fn run_block_quantized(block: &ToyBlock, plan: &QuantPlan, x: &Matrix) -> Result<(Matrix, FidelityReport)> {
    check_plan(block, plan)?;
    block.check_input(x)?;
    let cfg = &block.cfg;
    let d = cfg.embed_dim;
    let mut hist = Vec::with_capacity(ActivationSite::ALL.len());
    let mut note = |site, m: &Matrix, p: &QuantParams| hist.push(SiteHistogram { site, bins: histogram_bins(m, p) });

    let qkv = linear_layer(&block.qkv, cfg.bit_w, &plan.qkv)?;
    note(ActivationSite::QkvIn, x, &plan.qkv.activation);
    let qkv_out = forward_quantized_linear(&qkv, x)?;
    let query = qkv_out.col_slice(0, d)?;
    let key_t = qkv_out.col_slice(d, d)?.transpose();
    let values = qkv_out.col_slice(2 * d, d)?;

    note(ActivationSite::Query, &query, &plan.matmul1.a);
    note(ActivationSite::Key, &key_t, &plan.matmul1.b);
    let scores = quantized_matmul(&quantize(&query, &plan.matmul1.a), &quantize(&key_t, &plan.matmul1.b))?
        .values
        .scale(block.attention_scale());
    let probs = softmax_rows(&scores);

    let QuantParams::Uniform(vp) = plan.matmul2.b else {
        return Err(QkitError::InvalidParam("MatMul2 values need a uniform quantizer".into()));
    };
    note(ActivationSite::Probs, &probs, &plan.matmul2.a);
    note(ActivationSite::Values, &values, &plan.matmul2.b);
    let attn = forward_attention_matmul(&AttentionMatmulLayer::new(plan.matmul2.a, vp)?, &probs, &values)?;

    let proj = linear_layer(&block.proj, cfg.bit_w, &plan.proj)?;
    note(ActivationSite::ProjIn, &attn, &plan.proj.activation);
    let proj_out = forward_quantized_linear(&proj, &attn)?;

    let fc1 = linear_layer(&block.fc1, cfg.bit_w, &plan.fc1)?;
    note(ActivationSite::Fc1In, &proj_out, &plan.fc1.activation);
    let hidden = gelu(&forward_quantized_linear(&fc1, &proj_out)?);

    let fc2 = linear_layer(&block.fc2, cfg.bit_w, &plan.fc2)?;
    note(ActivationSite::Fc2In, &fc2.quantizer_input(&hidden), &plan.fc2.activation);
    let out = forward_quantized_linear(&fc2, &hidden)?;

    let reference = block.forward_fp(x)?.output;
    let report = FidelityReport {
        mse: mse(&reference, &out)?,
        sqnr_db: sqnr_db(&reference, &out)?,
        cosine: cosine_similarity(&reference, &out)?,
        histograms: hist,
    };
    Ok((out, report))
}

/// [`run_block_quantized`] over a batch: metrics are computed on the
/// stacked outputs and histograms are summed across inputs.
pub fn evaluate_block(block: &ToyBlock, plan: &QuantPlan, data: &[Matrix]) -> Result<FidelityReport> {
    if data.is_empty() {
        return Err(QkitError::Empty("evaluation data"));
    }
    let (mut outs, mut refs) = (Vec::with_capacity(data.len()), Vec::with_capacity(data.len()));
    let mut histograms: Vec<SiteHistogram> = Vec::new();
    for x in data {
        let (y, report) = run_block_quantized(block, plan, x)?;
        if histograms.is_empty() {
            histograms = report.histograms;
        } else {
            for (acc, h) in histograms.iter_mut().zip(&report.histograms) {
                acc.bins.iter_mut().zip(&h.bins).for_each(|(a, b)| a.count += b.count);
            }
        }
        outs.push(y);
        refs.push(block.forward_fp(x)?.output);
    }
    let (out, reference) = (Matrix::vstack(&outs)?, Matrix::vstack(&refs)?);
    Ok(FidelityReport {
        mse: mse(&reference, &out)?,
        sqnr_db: sqnr_db(&reference, &out)?,
        cosine: cosine_similarity(&reference, &out)?,
        histograms,
    })
}
