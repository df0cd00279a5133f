//! Wiring the search to concrete quantizers. Every loss is the MSE between
//! the layer output computed from a fake-quantized input and the recorded
//! full-precision output.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::fpcs::{brute_force_search, fpcs_search, SearchOutcome};
use super::space::{percentile_anchors, Axis, FpcsConfig, SearchSpace};
use crate::error::{QkitError, Result};
use crate::numeric::{mse, Matrix};
use crate::quant::{
    dequant_lut, fake_quant, is_prime, log_code_from, max_code, neg_log, uniform_params_from_bounds, valid_q,
    AdaLogParams, LogBase, LogFixedParams, QuantParams,
};

/// Layer function applied to a (fake-)quantized input.
pub type ForwardFn<'a> = dyn Fn(&Matrix) -> Result<Matrix> + Sync + 'a;

/// Recorded input/output of one layer plus the layer itself.
pub struct LayerCalibData<'a> {
    /// Exactly what the activation quantizer sees.
    pub input: &'a Matrix,
    /// Full-precision layer output.
    pub output: &'a Matrix,
    pub forward: &'a ForwardFn<'a>,
}

impl LayerCalibData<'_> {
    pub fn loss_with(&self, params: &QuantParams) -> f64 {
        self.loss_of(&fake_quant(self.input, params))
    }

    fn loss_of(&self, fake: &Matrix) -> f64 {
        (self.forward)(fake).and_then(|y| mse(&y, self.output)).unwrap_or(f64::INFINITY)
    }

    fn positive_values(&self) -> Vec<f64> {
        self.input.data().iter().copied().filter(|v| *v > 0.0).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub params: QuantParams,
    pub loss: f64,
    /// Best loss over the initial grid.
    pub initial_best: f64,
    pub initial_size: usize,
    /// Upper bound on `outcome.evaluations` for this search.
    pub budget: usize,
    pub outcome: SearchOutcome,
}

impl SearchResult {
    fn finish(outcome: SearchOutcome, initial_size: usize, budget: usize, params: QuantParams) -> Self {
        Self { params, loss: outcome.best.loss, initial_best: outcome.round_best[0], initial_size, budget, outcome }
    }
}

/// Searches the clipping interval `[lo, hi]` of an asymmetric uniform quantizer.
pub fn search_uniform_activation(calib: &LayerCalibData<'_>, bit: u8, cfg: &FpcsConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let anchors = percentile_anchors(calib.input.data(), cfg.alpha_lo, cfg.alpha_hi)?;
    let space = SearchSpace::from_anchors(&anchors, cfg).with_constraint(move |lo, hi| lo < hi);
    let initial_size = space.initial().points.len();
    if initial_size == 0 {
        let p = fallback_uniform(anchors.pct0, anchors.pct1, bit)?;
        let loss = calib.loss_with(&p);
        let outcome = SearchOutcome {
            best: super::Candidate { a: anchors.pct0, b: anchors.pct1, loss },
            evaluations: 1,
            round_best: vec![loss],
            trace: vec![super::TraceRow { round: 0, a: anchors.pct0, b: anchors.pct1, loss }],
        };
        return Ok(SearchResult::finish(outcome, 1, 1, p));
    }
    let objective = |lo: f64, hi: f64| match uniform_params_from_bounds(lo, hi, bit) {
        Ok(p) => calib.loss_with(&QuantParams::Uniform(p)),
        Err(_) => f64::INFINITY,
    };
    let outcome = fpcs_search(&objective, &space, cfg);
    let params = QuantParams::Uniform(uniform_params_from_bounds(outcome.best.a, outcome.best.b, bit)?);
    Ok(SearchResult::finish(outcome, initial_size, cfg.evaluation_budget(initial_size), params))
}

/// Constant inputs leave no interval to search; use one around the value.
fn fallback_uniform(lo: f64, hi: f64, bit: u8) -> Result<QuantParams> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo.min(0.0) - 1e-6, hi.max(0.0) + 1e-6) };
    Ok(QuantParams::Uniform(uniform_params_from_bounds(lo, hi, bit)?))
}

/// Scale axis for the log-family quantizers: from the high percentile of the
/// positive inputs up to their maximum.
pub fn log_axis_for(input: &Matrix, cfg: &FpcsConfig) -> Result<Axis> {
    let positives: Vec<f64> = input.data().iter().copied().filter(|v| *v > 0.0).collect();
    if positives.is_empty() {
        return Err(QkitError::Calibration("log quantizer needs positive activations, found none".into()));
    }
    let anchors = percentile_anchors(&positives, cfg.alpha_lo, cfg.alpha_hi)?;
    Ok(Axis::partition(anchors.pct_hi, anchors.pct1, cfg.x))
}

/// The integer exponent numerators searched for AdaLog: `⌈r/3⌉..=2r`
/// excluding multiples of `r` other than `r` itself.
pub fn q_grid(r: u32) -> Vec<i64> {
    (r.div_ceil(3)..=2 * r).filter(|&q| valid_q(q, r)).map(i64::from).collect()
}

/// Jointly searches the scale `s` and the base numerator `q` (base `2^(q/r)`).
pub fn search_adalog(calib: &LayerCalibData<'_>, bit: u8, r: u32, cfg: &FpcsConfig) -> Result<SearchResult> {
    cfg.validate()?;
    if !is_prime(r) {
        return Err(QkitError::InvalidParam(format!("r = {r} must be prime")));
    }
    if calib.positive_values().is_empty() {
        return Err(QkitError::Calibration("AdaLog needs positive activations, found none".into()));
    }
    let s_axis = log_axis_for(calib.input, cfg)?;
    let (q_lo, q_hi) = (r.div_ceil(3) as f64, 2.0 * r as f64);
    let space = SearchSpace::new(s_axis, Axis::integers(q_grid(r)))
        .with_constraint(move |s, q| s > 0.0 && q >= q_lo && q <= q_hi && valid_q(q as u32, r));
    let initial_size = space.initial().points.len();
    // many candidates share a scale; −log2(a/s) is computed once per scale
    let logs: Mutex<HashMap<u64, Arc<Vec<f64>>>> = Mutex::new(HashMap::new());
    let neg_logs = |s: f64| -> Arc<Vec<f64>> {
        if let Some(v) = logs.lock().unwrap().get(&s.to_bits()) {
            return v.clone();
        }
        let v: Arc<Vec<f64>> = Arc::new(calib.input.data().iter().map(|&a| neg_log(a, s)).collect());
        logs.lock().unwrap().insert(s.to_bits(), v.clone());
        v
    };
    let objective = |s: f64, q: f64| match AdaLogParams::new(s, q as u32, r, bit) {
        Ok(p) => {
            let params = QuantParams::AdaLog(p);
            let (lut, mult, max) = (dequant_lut(&params), p.code_mult(), max_code(bit));
            let data = neg_logs(s).iter().map(|&l| lut[log_code_from(l, mult, max) as usize]).collect();
            calib.loss_of(&Matrix::from_parts(calib.input.rows(), calib.input.cols(), data))
        }
        Err(_) => f64::INFINITY,
    };
    let outcome = fpcs_search(&objective, &space, cfg);
    let params = QuantParams::AdaLog(AdaLogParams::new(outcome.best.a, outcome.best.b as u32, r, bit)?);
    Ok(SearchResult::finish(outcome, initial_size, cfg.evaluation_budget(initial_size), params))
}

/// Fixed-base log quantizers have a single hyperparameter; the scale is
/// chosen exhaustively on the same scale partition AdaLog starts from.
pub fn search_log_fixed(calib: &LayerCalibData<'_>, bit: u8, base: LogBase, cfg: &FpcsConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let s_axis = log_axis_for(calib.input, cfg)?;
    let grid: Vec<f64> = s_axis.points.iter().copied().filter(|s| *s > 0.0).collect();
    let objective = |s: f64, _: f64| match LogFixedParams::new(s, bit, base) {
        Ok(p) => calib.loss_with(&QuantParams::Log(p)),
        Err(_) => f64::INFINITY,
    };
    let outcome = brute_force_search(&objective, &grid, &[0.0]);
    let params = QuantParams::Log(LogFixedParams::new(outcome.best.a, bit, base)?);
    Ok(SearchResult::finish(outcome, grid.len(), grid.len(), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gen_synthetic, matmul, SyntheticKind};

    #[test]
    fn q_grid_for_37() {
        let g = q_grid(37);
        assert_eq!(g.first(), Some(&13));
        assert_eq!(g.last(), Some(&73));
        assert!(g.contains(&37));
        assert!(!g.contains(&74));
        assert_eq!(g.len(), 61);
    }

    #[test]
    fn representable_uniform_data_has_zero_loss() {
        // data already on a 4-bit grid over [0, 1.5]
        let x = Matrix::from_fn(16, 16, |i, j| ((i * 16 + j) % 16) as f64 * 0.1);
        let fwd = |m: &Matrix| Ok(m.clone());
        let calib = LayerCalibData { input: &x, output: &x, forward: &fwd };
        let res = search_uniform_activation(&calib, 4, &FpcsConfig::default()).unwrap();
        let minmax = uniform_params_from_bounds(0.0, 1.5, 4).unwrap();
        assert!(calib.loss_with(&QuantParams::Uniform(minmax)) < 1e-28);
        assert!(res.loss <= 1e-28);
    }

    #[test]
    fn adalog_rejects_non_positive_support() {
        let x = Matrix::from_fn(4, 4, |i, j| -((i + j) as f64));
        let fwd = |m: &Matrix| Ok(m.clone());
        let calib = LayerCalibData { input: &x, output: &x, forward: &fwd };
        assert!(matches!(search_adalog(&calib, 4, 37, &FpcsConfig::default()), Err(QkitError::Calibration(_))));
        assert!(search_adalog(&calib, 4, 36, &FpcsConfig::default()).is_err());
    }

    #[test]
    fn adalog_beats_or_ties_log2_on_softmax() {
        let probs = gen_synthetic(SyntheticKind::SoftmaxRows, 64, 16, 5).unwrap();
        let v = gen_synthetic(SyntheticKind::Gaussian, 16, 8, 6).unwrap();
        let out = matmul(&probs, &v).unwrap();
        let fwd = |p: &Matrix| matmul(p, &v);
        let calib = LayerCalibData { input: &probs, output: &out, forward: &fwd };
        let cfg = FpcsConfig::default();
        let ada = search_adalog(&calib, 3, 37, &cfg).unwrap();
        let log2 = search_log_fixed(&calib, 3, LogBase::Two, &cfg).unwrap();
        assert!(ada.loss <= log2.loss);
        assert!(ada.loss <= ada.initial_best);
        let QuantParams::AdaLog(p) = ada.params else { panic!() };
        assert!(valid_q(p.q, 37));
        assert!(ada.outcome.evaluations <= ada.budget);
        assert!(log2.outcome.evaluations <= log2.budget);
    }
}
