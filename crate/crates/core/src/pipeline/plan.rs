use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::block::{Activations, ToyBlock, ToyBlockConfig};
use crate::calib::{
    search_adalog, search_log_fixed, search_uniform_activation, FpcsConfig, LayerCalibData, SearchResult, TraceRow,
};
use crate::error::{QkitError, Result};
use crate::layer::{LinearLayer, QuantizedLinearLayer};
use crate::numeric::{matmul, Matrix};
use crate::quant::{LogBase, QuantParams, QuantizerKind, UniformParams};

/// A quantized operand inside the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationSite {
    QkvIn,
    Query,
    Key,
    Probs,
    Values,
    ProjIn,
    Fc1In,
    Fc2In,
}

impl ActivationSite {
    pub const ALL: [ActivationSite; 8] =
        [Self::QkvIn, Self::Query, Self::Key, Self::Probs, Self::Values, Self::ProjIn, Self::Fc1In, Self::Fc2In];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::QkvIn => "qkv-in",
            Self::Query => "query",
            Self::Key => "key",
            Self::Probs => "probs",
            Self::Values => "values",
            Self::ProjIn => "proj-in",
            Self::Fc1In => "fc1-in",
            Self::Fc2In => "fc2-in",
        }
    }

    /// What the site's quantizer sees in a full-precision pass.
    pub fn quantizer_input(self, acts: &Activations) -> Matrix {
        match self {
            Self::QkvIn => acts.input.clone(),
            Self::Query => acts.query.clone(),
            Self::Key => acts.key.transpose(),
            Self::Probs => acts.probs.clone(),
            Self::Values => acts.values.clone(),
            Self::ProjIn => acts.attn.clone(),
            Self::Fc1In => acts.proj_out.clone(),
            Self::Fc2In => crate::layer::reparam_shift(&acts.hidden),
        }
    }
}

impl std::fmt::Display for ActivationSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationSite {
    type Err = QkitError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|site| site.as_str() == s)
            .ok_or_else(|| QkitError::InvalidParam(format!("unknown site '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub evaluations: usize,
    pub budget: usize,
    pub initial_loss: f64,
    pub loss: f64,
}

impl From<&SearchResult> for SearchSummary {
    fn from(r: &SearchResult) -> Self {
        Self { evaluations: r.outcome.evaluations, budget: r.budget, initial_loss: r.initial_best, loss: r.loss }
    }
}

/// Activation quantizer and effective bias of a linear site. Weights are
/// rebuilt from the block, so only their bit-width is implied by the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSitePlan {
    pub activation: QuantParams,
    /// `b` for generic layers, the reparameterized bias for FC2.
    pub bias: Vec<f64>,
    pub search: SearchSummary,
}

/// Quantizers of both operands of an activation-activation product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatmulSitePlan {
    pub a: QuantParams,
    pub b: QuantParams,
    pub search_a: SearchSummary,
    pub search_b: SearchSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantPlan {
    pub config: ToyBlockConfig,
    pub qkv: LinearSitePlan,
    pub matmul1: MatmulSitePlan,
    pub matmul2: MatmulSitePlan,
    pub proj: LinearSitePlan,
    pub fc1: LinearSitePlan,
    pub fc2: LinearSitePlan,
}

impl QuantPlan {
    fn summaries(&self) -> [&SearchSummary; 8] {
        [
            &self.qkv.search,
            &self.matmul1.search_a,
            &self.matmul1.search_b,
            &self.matmul2.search_a,
            &self.matmul2.search_b,
            &self.proj.search,
            &self.fc1.search,
            &self.fc2.search,
        ]
    }

    /// Sum of the per-search evaluation bounds.
    pub fn evaluation_budget(&self) -> usize {
        self.summaries().iter().map(|s| s.budget).sum()
    }

    pub fn evaluations(&self) -> usize {
        self.summaries().iter().map(|s| s.evaluations).sum()
    }

    pub fn params_for(&self, site: ActivationSite) -> &QuantParams {
        match site {
            ActivationSite::QkvIn => &self.qkv.activation,
            ActivationSite::Query => &self.matmul1.a,
            ActivationSite::Key => &self.matmul1.b,
            ActivationSite::Probs => &self.matmul2.a,
            ActivationSite::Values => &self.matmul2.b,
            ActivationSite::ProjIn => &self.proj.activation,
            ActivationSite::Fc1In => &self.fc1.activation,
            ActivationSite::Fc2In => &self.fc2.activation,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(s).map_err(|e| QkitError::Format(format!("plan JSON: {e}")))?;
        plan.config.validate()?;
        Ok(plan)
    }
}

/// Evaluation history of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTrace {
    pub site: ActivationSite,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub plan: QuantPlan,
    pub traces: Vec<SiteTrace>,
}

impl Calibration {
    /// CSV with columns `site,round,a,b,loss`, one row per loss evaluation.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("site,round,a,b,loss\n");
        for t in &self.traces {
            for r in &t.rows {
                let _ = writeln!(out, "{},{},{},{},{}", t.site, r.round, r.a, r.b, r.loss);
            }
        }
        out
    }

    pub fn trace_len(&self) -> usize {
        self.traces.iter().map(|t| t.rows.len()).sum()
    }
}

fn search_kind(
    calib: &LayerCalibData<'_>,
    kind: QuantizerKind,
    bit: u8,
    r: u32,
    cfg: &FpcsConfig,
) -> Result<SearchResult> {
    match kind {
        QuantizerKind::Uniform => search_uniform_activation(calib, bit, cfg),
        QuantizerKind::Adalog => search_adalog(calib, bit, r, cfg),
        QuantizerKind::Log2 => search_log_fixed(calib, bit, LogBase::Two, cfg),
        QuantizerKind::Logsqrt2 => search_log_fixed(calib, bit, LogBase::SqrtTwo, cfg),
    }
}

/// Splits a stack of per-sample matrices back into blocks of `rows`.
fn chunks(m: &Matrix, rows: usize) -> Result<Vec<Matrix>> {
    (0..m.rows() / rows).map(|i| m.row_slice(i * rows, rows)).collect()
}

/// Applies `f` per sample to a stacked left operand.
fn per_sample(
    stacked: &Matrix,
    rows: usize,
    others: &[Matrix],
    f: impl Fn(&Matrix, &Matrix) -> Result<Matrix>,
) -> Result<Matrix> {
    let parts: Result<Vec<Matrix>> = chunks(stacked, rows)?.iter().zip(others).map(|(a, b)| f(a, b)).collect();
    Matrix::vstack(&parts?)
}

struct Calibrator<'a> {
    cfg: &'a ToyBlockConfig,
    traces: Vec<SiteTrace>,
}

impl Calibrator<'_> {
    fn record(&mut self, site: ActivationSite, res: &SearchResult) -> SearchSummary {
        self.traces.push(SiteTrace { site, rows: res.outcome.trace.clone() });
        res.into()
    }

    fn linear_site(
        &mut self,
        site: ActivationSite,
        layer: &LinearLayer,
        kind: QuantizerKind,
        input: &Matrix,
        output: &Matrix,
    ) -> Result<LinearSitePlan> {
        let placeholder = QuantParams::Uniform(UniformParams::new(1.0, 0, self.cfg.bit_a)?);
        let ql = QuantizedLinearLayer::build(layer, self.cfg.bit_w, placeholder)?;
        let qin = ql.quantizer_input(input);
        let w_t = ql.w_hat().transpose();
        let forward = |x: &Matrix| matmul(x, &w_t)?.add_row_vector(&ql.bias_eff);
        let calib = LayerCalibData { input: &qin, output, forward: &forward };
        let res =
            search_kind(&calib, kind, self.cfg.bit_a, self.cfg.r, &self.cfg.search).map_err(|e| site_error(site, e))?;
        Ok(LinearSitePlan { activation: res.params, bias: ql.bias_eff.clone(), search: self.record(site, &res) })
    }

    fn search(
        &mut self,
        site: ActivationSite,
        kind: QuantizerKind,
        input: &Matrix,
        output: &Matrix,
        forward: &crate::calib::ForwardFn<'_>,
    ) -> Result<(QuantParams, SearchSummary)> {
        let calib = LayerCalibData { input, output, forward };
        let res =
            search_kind(&calib, kind, self.cfg.bit_a, self.cfg.r, &self.cfg.search).map_err(|e| site_error(site, e))?;
        Ok((res.params, self.record(site, &res)))
    }
}

fn site_error(site: ActivationSite, e: QkitError) -> QkitError {
    match e {
        QkitError::Calibration(m) => QkitError::Calibration(format!("site {site}: {m}")),
        other => other,
    }
}

/// Captures every site's full-precision input and output over the
/// calibration set and searches each quantizer against them. The two
/// operands of a product are searched separately, each with the other left
/// at full precision.
pub fn calibrate_block(block: &ToyBlock, calib: &[Matrix]) -> Result<Calibration> {
    if calib.is_empty() {
        return Err(QkitError::Empty("calibration set"));
    }
    let cfg = &block.cfg;
    let acts: Vec<Activations> = calib.iter().map(|x| block.forward_fp(x)).collect::<Result<_>>()?;
    let stack = |f: fn(&Activations) -> &Matrix| Matrix::vstack(&acts.iter().map(|a| f(a).clone()).collect::<Vec<_>>());
    let input = stack(|a| &a.input)?;
    let qkv_out = stack(|a| &a.qkv_out)?;
    let query = stack(|a| &a.query)?;
    let scores = stack(|a| &a.scores)?;
    let probs = stack(|a| &a.probs)?;
    let values = stack(|a| &a.values)?;
    let attn = stack(|a| &a.attn)?;
    let proj_out = stack(|a| &a.proj_out)?;
    let fc1_out = stack(|a| &a.fc1_out)?;
    let hidden = stack(|a| &a.hidden)?;
    let output = stack(|a| &a.output)?;
    let key_t: Vec<Matrix> = acts.iter().map(|a| a.key.transpose()).collect();
    let query_s: Vec<Matrix> = acts.iter().map(|a| a.query.clone()).collect();
    let probs_s: Vec<Matrix> = acts.iter().map(|a| a.probs.clone()).collect();
    let values_s: Vec<Matrix> = acts.iter().map(|a| a.values.clone()).collect();
    let t = cfg.num_tokens;
    let d = cfg.embed_dim;
    let scale = block.attention_scale();

    let mut c = Calibrator { cfg, traces: Vec::new() };
    let qkv = c.linear_site(ActivationSite::QkvIn, &block.qkv, QuantizerKind::Uniform, &input, &qkv_out)?;

    let fwd_q = |q: &Matrix| per_sample(q, t, &key_t, |q, kt| Ok(matmul(q, kt)?.scale(scale)));
    let (qa, sa) = c.search(ActivationSite::Query, QuantizerKind::Uniform, &query, &scores, &fwd_q)?;
    // keys are stacked transposed: one d×t block per sample, side by side
    let key_stack = Matrix::vstack(&key_t)?;
    let fwd_k = |kt: &Matrix| per_sample(kt, d, &query_s, |kt, q| Ok(matmul(q, kt)?.scale(scale)));
    let (kb, sb) = c.search(ActivationSite::Key, QuantizerKind::Uniform, &key_stack, &scores, &fwd_k)?;
    let matmul1 = MatmulSitePlan { a: qa, b: kb, search_a: sa, search_b: sb };

    let fwd_p = |p: &Matrix| per_sample(p, t, &values_s, matmul);
    let (pa, sa) = c.search(ActivationSite::Probs, cfg.matmul2, &probs, &attn, &fwd_p)?;
    let fwd_v = |v: &Matrix| per_sample(v, t, &probs_s, |v, p| matmul(p, v));
    let (vb, sb) = c.search(ActivationSite::Values, QuantizerKind::Uniform, &values, &attn, &fwd_v)?;
    let matmul2 = MatmulSitePlan { a: pa, b: vb, search_a: sa, search_b: sb };

    let proj = c.linear_site(ActivationSite::ProjIn, &block.proj, QuantizerKind::Uniform, &attn, &proj_out)?;
    let fc1 = c.linear_site(ActivationSite::Fc1In, &block.fc1, QuantizerKind::Uniform, &proj_out, &fc1_out)?;
    let fc2 = c.linear_site(ActivationSite::Fc2In, &block.fc2, cfg.fc2, &hidden, &output)?;

    let plan = QuantPlan { config: cfg.clone(), qkv, matmul1, matmul2, proj, fc1, fc2 };
    Ok(Calibration { plan, traces: c.traces })
}
