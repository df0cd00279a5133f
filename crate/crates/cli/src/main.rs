//! `qkit`: reproducible quantization experiments on synthetic data and a
//! toy transformer block. Every output is JSON or CSV.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkit::kernels::{MatmulShape, PathKind};
use qkit::numeric::SyntheticKind;
use qkit::pipeline::ActivationSite;
use qkit::quant::QuantizerKind;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qkit", version, about = "Adaptive-base log quantization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic tensor file.
    GenData(GenDataArgs),
    /// Calibrate the toy block; writes a plan JSON and a search trace CSV.
    Calibrate(CalibrateArgs),
    /// Run a plan through the integer kernels and report fidelity as JSON.
    QuantizeEval(EvalArgs),
    /// Code histogram of one activation site as CSV.
    Histogram(HistogramArgs),
    /// FixOP cost of one matmul shape as JSON.
    Fixops(FixopsArgs),
    /// Compare FPCS, dense brute force and alternating search as CSV.
    SearchBench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// softmax-rows, gelu-of-gaussian, gaussian or uniform01
    #[arg(long)]
    kind: String,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Search knobs shared by every calibrating command.
#[derive(Debug, Args, Clone)]
struct SearchArgs {
    /// Per-round evaluation budget n = x·y = k·z1·z2.
    #[arg(long, default_value_t = 128)]
    n: usize,
    /// Refinement rounds.
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha_lo: f64,
    #[arg(long, default_value_t = 0.9)]
    alpha_hi: f64,
}

#[derive(Debug, Args)]
struct BlockArgs {
    /// Block configuration JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long)]
    bit_w: Option<u8>,
    #[arg(long)]
    bit_a: Option<u8>,
    /// Quantizer for the post-GELU FC2 input and, when log-domain, also for
    /// the attention probabilities (which always need a log quantizer).
    #[arg(long, value_parser = parse_quantizer)]
    quantizer: Option<QuantizerKind>,
    #[arg(long, value_parser = parse_quantizer)]
    matmul2: Option<QuantizerKind>,
    #[arg(long, value_parser = parse_quantizer)]
    fc2: Option<QuantizerKind>,
    /// AdaLog base denominator (prime).
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    alpha_lo: Option<f64>,
    #[arg(long)]
    alpha_hi: Option<f64>,
    /// Weight seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Tensor files of shape tokens × embed_dim; generated when omitted.
    #[arg(long = "data", num_args = 1..)]
    files: Vec<PathBuf>,
    /// Number of generated token matrices.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Seed of the generated token matrices.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    block: BlockArgs,
    /// Calibration tensor files; generated from the weight seed when omitted.
    #[arg(long = "calib", num_args = 1..)]
    calib: Vec<PathBuf>,
    #[arg(long, default_value_t = commands::DEFAULT_CALIB_COUNT)]
    calib_count: usize,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the plan path with a `.trace.csv` extension.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HistogramArgs {
    #[arg(long)]
    plan: PathBuf,
    /// qkv-in, query, key, probs, values, proj-in, fc1-in or fc2-in
    #[arg(long, value_parser = parse_site)]
    site: ActivationSite,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FixopsArgs {
    /// uniform, log2, logsqrt2 or adalog
    #[arg(long, value_parser = parse_path)]
    path: PathKind,
    /// Product shape as MxKxN (an m×k by k×n product).
    #[arg(long, value_parser = parse_shape)]
    shape: MatmulShape,
    /// Bits of the left (activation) operand.
    #[arg(long, default_value_t = 4)]
    bit_a: u8,
    /// Bits of the right operand.
    #[arg(long, default_value_t = 4)]
    bit_w: u8,
    /// FixOPs charged per float multiply.
    #[arg(long, default_value_t = 4.0)]
    float_mul_cost: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// bumps, valley or quadratic
    #[arg(long, default_value = "bumps")]
    loss: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    search: SearchArgs,
    /// Dense brute-force grid as COLSxROWS.
    #[arg(long, default_value = "129x65", value_parser = parse_dims)]
    dense: (usize, usize),
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_quantizer(s: &str) -> Result<QuantizerKind, String> {
    s.parse().map_err(|e: qkit::QkitError| e.to_string())
}

fn parse_site(s: &str) -> Result<ActivationSite, String> {
    s.parse().map_err(|e: qkit::QkitError| e.to_string())
}

fn parse_path(s: &str) -> Result<PathKind, String> {
    s.parse().map_err(|e: qkit::QkitError| e.to_string())
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected AxB, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_shape(s: &str) -> Result<MatmulShape, String> {
    let dims: Vec<usize> =
        s.split('x').map(|v| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"))).collect::<Result<_, _>>()?;
    match dims[..] {
        [m, k, n] if m > 0 && k > 0 && n > 0 => Ok(MatmulShape { m, k, n }),
        _ => Err(format!("expected three positive dimensions MxKxN, got '{s}'")),
    }
}

fn parse_kind(s: &str) -> CliResult<SyntheticKind> {
    s.parse().map_err(|e: qkit::QkitError| CliError::Usage(e.to_string()))
}

/// `QKIT_THREADS` caps the worker pool used by the calibration search.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("QKIT_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("QKIT_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(parse_kind(&a.kind)?, a.rows, a.cols, a.seed, &a.out),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::QuantizeEval(a) => commands::quantize_eval(&a),
        Command::Histogram(a) => commands::histogram(&a),
        Command::Fixops(a) => commands::fixops(&a),
        Command::SearchBench(a) => commands::search_bench(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
