use std::path::{Path, PathBuf};

use serde::Serialize;

use qkit::calib::bench::{bench_csv, run_bench, LossKind};
use qkit::calib::FpcsConfig;
use qkit::kernels::{fixops_report, CostModel};
use qkit::numeric::{encode_tensor, gen_synthetic, SyntheticKind};
use qkit::pipeline::{
    build_toy_block, calibrate_block, calibration_set, evaluate_block, histogram_codes, histograms_csv,
    run_block_quantized, QuantPlan, ToyBlock, ToyBlockConfig,
};
use qkit::Matrix;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_json, read_matrices, read_text, write_atomic};
use crate::{BenchArgs, BlockArgs, CalibrateArgs, DataArgs, EvalArgs, FixopsArgs, HistogramArgs, SearchArgs};

pub const DEFAULT_CALIB_COUNT: usize = 32;

/// Generated calibration data uses the weight seed plus this offset, so
/// data and weights come from different streams.
pub const CALIB_SEED_OFFSET: u64 = 1_000_000;

pub fn gen_data(kind: SyntheticKind, rows: usize, cols: usize, seed: u64, out: &Path) -> CliResult<()> {
    let m = gen_synthetic(kind, rows, cols, seed)?;
    write_atomic(out, &encode_tensor(&m))?;
    eprintln!("wrote {kind} {rows}x{cols} (seed {seed}) to {}", out.display());
    Ok(())
}

impl SearchArgs {
    fn config(&self) -> CliResult<FpcsConfig> {
        let cfg =
            FpcsConfig { alpha_lo: self.alpha_lo, alpha_hi: self.alpha_hi, ..FpcsConfig::with_budget(self.n, self.p)? };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl BlockArgs {
    fn config(&self) -> CliResult<ToyBlockConfig> {
        let mut cfg: ToyBlockConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => ToyBlockConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set!(embed_dim => cfg.embed_dim, tokens => cfg.num_tokens, bit_w => cfg.bit_w, bit_a => cfg.bit_a,
             r => cfg.r, seed => cfg.seed);
        if let Some(q) = self.quantizer {
            cfg.fc2 = q;
            if q.is_log_family() {
                cfg.matmul2 = q;
            }
        }
        set!(matmul2 => cfg.matmul2, fc2 => cfg.fc2);
        if self.n.is_some() || self.p.is_some() {
            let search = FpcsConfig::with_budget(self.n.unwrap_or(cfg.search.n), self.p.unwrap_or(cfg.search.p))?;
            cfg.search = FpcsConfig { alpha_lo: cfg.search.alpha_lo, alpha_hi: cfg.search.alpha_hi, ..search };
        }
        set!(alpha_lo => cfg.search.alpha_lo, alpha_hi => cfg.search.alpha_hi);
        cfg.validate()?;
        cfg.search.validate()?;
        Ok(cfg)
    }
}

/// Checks every matrix against the block's input shape before any work.
fn check_inputs(block: &ToyBlock, data: &[Matrix], what: &str) -> CliResult<()> {
    for (i, x) in data.iter().enumerate() {
        block.check_input(x).map_err(|e| CliError::Input { path: format!("{what} #{i}"), source: e })?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
enum DataSource {
    Files { paths: Vec<PathBuf> },
    Generated { count: usize, seed: u64 },
}

impl DataArgs {
    fn load(&self, cfg: &ToyBlockConfig) -> CliResult<(Vec<Matrix>, DataSource)> {
        if self.files.is_empty() {
            if self.count == 0 {
                return Err(CliError::Usage("--count must be positive".into()));
            }
            Ok((
                calibration_set(cfg, self.count, self.data_seed),
                DataSource::Generated { count: self.count, seed: self.data_seed },
            ))
        } else {
            Ok((read_matrices(&self.files)?, DataSource::Files { paths: self.files.clone() }))
        }
    }
}

fn load_plan(path: &Path) -> CliResult<(QuantPlan, ToyBlock)> {
    let plan = QuantPlan::from_json(&read_text(path)?)
        .map_err(|e| CliError::Input { path: path.display().to_string(), source: e })?;
    let block = build_toy_block(&plan.config)?;
    Ok((plan, block))
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult<()> {
    let cfg = a.block.config()?;
    let block = build_toy_block(&cfg)?;
    let calib = if a.calib.is_empty() {
        if a.calib_count == 0 {
            return Err(CliError::Usage("--calib-count must be positive".into()));
        }
        calibration_set(&cfg, a.calib_count, cfg.seed + CALIB_SEED_OFFSET)
    } else {
        read_matrices(&a.calib)?
    };
    check_inputs(&block, &calib, "calibration matrix")?;
    let cal = calibrate_block(&block, &calib)?;
    let trace = a.trace.clone().unwrap_or_else(|| a.out.with_extension("trace.csv"));
    write_atomic(&a.out, cal.plan.to_json()?.as_bytes())?;
    write_atomic(&trace, cal.trace_csv().as_bytes())?;
    eprintln!(
        "calibrated on {} matrices: {} evaluations (budget {}), plan {}, trace {}",
        calib.len(),
        cal.trace_len(),
        cal.plan.evaluation_budget(),
        a.out.display(),
        trace.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InputReport {
    mse: f64,
    sqnr_db: f64,
    cosine: f64,
}

#[derive(Serialize)]
struct EvalReport {
    plan: PathBuf,
    seed: u64,
    data: DataSource,
    mse: f64,
    sqnr_db: f64,
    cosine: f64,
    inputs: Vec<InputReport>,
}

pub fn quantize_eval(a: &EvalArgs) -> CliResult<()> {
    let (plan, block) = load_plan(&a.plan)?;
    let (data, source) = a.data.load(&plan.config)?;
    check_inputs(&block, &data, "evaluation matrix")?;
    let pooled = evaluate_block(&block, &plan, &data)?;
    let inputs = data
        .iter()
        .map(|x| {
            let (_, r) = run_block_quantized(&block, &plan, x)?;
            Ok(InputReport { mse: r.mse, sqnr_db: r.sqnr_db, cosine: r.cosine })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = EvalReport {
        plan: a.plan.clone(),
        seed: plan.config.seed,
        data: source,
        mse: pooled.mse,
        sqnr_db: pooled.sqnr_db,
        cosine: pooled.cosine,
        inputs,
    };
    if !(report.mse.is_finite() && report.cosine.is_finite() && !report.sqnr_db.is_nan()) {
        return Err(qkit::QkitError::Calibration("fidelity metrics are not finite".into()).into());
    }
    let mut json = serde_json::to_string_pretty(&report).map_err(qkit::QkitError::from)?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

pub fn histogram(a: &HistogramArgs) -> CliResult<()> {
    let (plan, block) = load_plan(&a.plan)?;
    let (data, _) = a.data.load(&plan.config)?;
    check_inputs(&block, &data, "evaluation matrix")?;
    let bins = histogram_codes(&block, &plan, a.site, &data)?;
    emit(a.out.as_deref(), &histograms_csv(&bins))
}

pub fn fixops(a: &FixopsArgs) -> CliResult<()> {
    let cost = CostModel::new(a.float_mul_cost)?;
    for bit in [a.bit_a, a.bit_w] {
        qkit::quant::check_bit(bit)?;
    }
    let report = fixops_report(a.shape, a.path, a.bit_a, a.bit_w, &cost);
    let mut json = serde_json::to_string_pretty(&report).map_err(qkit::QkitError::from)?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

pub fn search_bench(a: &BenchArgs) -> CliResult<()> {
    let kind: LossKind = a.loss.parse().map_err(|e: qkit::QkitError| CliError::Usage(e.to_string()))?;
    let cfg = a.search.config()?;
    if a.dense.0 < 2 || a.dense.1 < 2 {
        return Err(CliError::Usage("--dense needs at least 2 points per axis".into()));
    }
    let rows = run_bench(kind, a.seed, &cfg, a.dense)?;
    emit(a.out.as_deref(), &bench_csv(&rows))
}
