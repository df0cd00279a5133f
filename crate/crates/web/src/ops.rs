use serde::Serialize;

use qkit::calib::bench::{linspace, LossKind, UNIT_ANCHORS};
use qkit::calib::{
    brute_force_search, fpcs_search, search_adalog, search_log_fixed, search_uniform_activation, FpcsConfig,
    LayerCalibData, SearchSpace, TraceRow,
};
use qkit::numeric::{gen_synthetic, mse, sqnr_db, SyntheticKind};
use qkit::pipeline::{histogram_bins, HistBin};
use qkit::quant::{
    build_adalog_tables, fake_quant, AdaLogParams, LogBase, LogFixedParams, QuantParams, QuantizerKind, UniformParams,
};
use qkit::{Matrix, QkitError};

type OpResult = Result<String, String>;

/// Rows × columns of the synthetic matrix behind [`calibrated_histogram`].
pub const DATA_SHAPE: (usize, usize) = (64, 16);

/// Heatmap resolution of [`search_trace`].
pub const HEATMAP: (usize, usize) = (48, 24);

fn err(e: QkitError) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> OpResult {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn log_params(kind: QuantizerKind, bit: u8, scale: f64, q: u32) -> Result<QuantParams, QkitError> {
    match kind {
        QuantizerKind::Log2 => Ok(QuantParams::Log(LogFixedParams::new(scale, bit, LogBase::Two)?)),
        QuantizerKind::Logsqrt2 => Ok(QuantParams::Log(LogFixedParams::new(scale, bit, LogBase::SqrtTwo)?)),
        QuantizerKind::Adalog => Ok(QuantParams::AdaLog(AdaLogParams::new(scale, q, 37, bit)?)),
        QuantizerKind::Uniform => {
            Ok(QuantParams::Uniform(UniformParams::new(scale / qkit::quant::max_code(bit) as f64, 0, bit)?))
        }
    }
}

#[derive(Serialize)]
struct Level {
    code: u8,
    value: f64,
}

#[derive(Serialize)]
struct Tables {
    shift: Vec<u32>,
    mantissa: Vec<u32>,
    s_table: f64,
}

#[derive(Serialize)]
struct Curve {
    kind: QuantizerKind,
    bit: u8,
    base: f64,
    levels: Vec<Level>,
    /// `(x, fake_quant(x))` on a log-spaced grid over `[scale·2^-12, 1.25·scale]`.
    curve: Vec<(f64, f64)>,
    tables: Option<Tables>,
}

/// Representable levels and the quantize-dequantize staircase of one
/// quantizer. `q` is only used by AdaLog (with `r = 37`); uniform spans
/// `[0, scale]` with zero point 0.
pub fn quantizer_curve(kind: &str, bit: u8, scale: f64, q: u32, points: usize) -> OpResult {
    let kind: QuantizerKind = kind.parse().map_err(err)?;
    if !(2..=4096).contains(&points) {
        return Err(format!("points must be in 2..=4096, got {points}"));
    }
    let params = log_params(kind, bit, scale, q).map_err(err)?;
    let levels =
        (0..=qkit::quant::max_code(bit)).map(|code| Level { code, value: params.dequant_code(code) }).collect();
    let xs: Vec<f64> = linspace(-12.0, (1.25f64).log2(), points).into_iter().map(|e| scale * e.exp2()).collect();
    let ys = fake_quant(&Matrix::new(1, points, xs.clone()).map_err(err)?, &params);
    let (base, tables) = match &params {
        QuantParams::AdaLog(p) => {
            let t = build_adalog_tables(p);
            (p.base(), Some(Tables { s_table: t.s_table(), shift: t.shift, mantissa: t.mantissa }))
        }
        QuantParams::Log(p) => (if p.base == LogBase::Two { 2.0 } else { std::f64::consts::SQRT_2 }, None),
        QuantParams::Uniform(_) => (f64::NAN, None),
    };
    let curve = xs.into_iter().zip(ys.data().iter().copied()).collect();
    to_json(&Curve { kind, bit, base: if base.is_nan() { 0.0 } else { base }, levels, curve, tables })
}

#[derive(Serialize)]
struct Histogram {
    params: QuantParams,
    mse: f64,
    sqnr_db: f64,
    evaluations: usize,
    bins: Vec<HistBin>,
}

/// Generates a synthetic matrix, calibrates the quantizer on it (reconstruction
/// MSE) and returns the code histogram with the fidelity of the result.
pub fn calibrated_histogram(data: &str, seed: u64, kind: &str, bit: u8) -> OpResult {
    let data: SyntheticKind = data.parse().map_err(err)?;
    let kind: QuantizerKind = kind.parse().map_err(err)?;
    let x = gen_synthetic(data, DATA_SHAPE.0, DATA_SHAPE.1, seed).map_err(err)?;
    let identity = |m: &Matrix| Ok(m.clone());
    let calib = LayerCalibData { input: &x, output: &x, forward: &identity };
    let cfg = FpcsConfig::default();
    let res = match kind {
        QuantizerKind::Uniform => search_uniform_activation(&calib, bit, &cfg),
        QuantizerKind::Adalog => search_adalog(&calib, bit, 37, &cfg),
        QuantizerKind::Log2 => search_log_fixed(&calib, bit, LogBase::Two, &cfg),
        QuantizerKind::Logsqrt2 => search_log_fixed(&calib, bit, LogBase::SqrtTwo, &cfg),
    }
    .map_err(err)?;
    let fq = fake_quant(&x, &res.params);
    to_json(&Histogram {
        params: res.params,
        mse: mse(&x, &fq).map_err(err)?,
        sqnr_db: sqnr_db(&x, &fq).map_err(err)?,
        evaluations: res.outcome.evaluations,
        bins: histogram_bins(&x, &res.params),
    })
}

#[derive(Serialize)]
struct Trace {
    rows: Vec<TraceRow>,
    best: (f64, f64, f64),
    evaluations: usize,
    budget: usize,
    dense_best: f64,
    dense_evaluations: usize,
    /// Row-major `HEATMAP.1 × HEATMAP.0` loss samples over the unit square,
    /// `b` increasing downwards.
    heatmap: Vec<f64>,
}

/// FPCS on one of the benchmark losses over the unit square, with the dense
/// brute-force optimum for reference.
pub fn search_trace(loss: &str, seed: u64, n: usize, p: usize) -> OpResult {
    let kind: LossKind = loss.parse().map_err(err)?;
    if p > 8 {
        return Err(format!("at most 8 rounds, got {p}"));
    }
    let cfg = FpcsConfig::with_budget(n, p).map_err(err)?;
    let f = kind.build(seed);
    let space = SearchSpace::from_anchors(&UNIT_ANCHORS, &cfg);
    let out = fpcs_search(&f, &space, &cfg);
    let dense = brute_force_search(&f, &linspace(0.0, 1.0, 129), &linspace(0.0, 1.0, 65));
    let (ha, hb) = (linspace(0.0, 1.0, HEATMAP.0), linspace(0.0, 1.0, HEATMAP.1));
    let heatmap = hb.iter().flat_map(|&b| ha.iter().map(move |&a| (a, b))).map(|(a, b)| f(a, b)).collect();
    to_json(&Trace {
        best: (out.best.a, out.best.b, out.best.loss),
        evaluations: out.evaluations,
        budget: cfg.evaluation_budget(space.initial().points.len()),
        dense_best: dense.best.loss,
        dense_evaluations: dense.evaluations,
        heatmap,
        rows: out.trace,
    })
}
