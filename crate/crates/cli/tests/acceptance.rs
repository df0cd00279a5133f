//! Acceptance criteria 1-10, one PASS/FAIL line each. Runs without libtest
//! so the lines are always printed; exits nonzero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use qkit::calib::bench::{linspace, BumpsLoss, UNIT_ANCHORS};
use qkit::calib::{
    brute_force_search, fpcs_search, q_grid, search_adalog, search_log_fixed, FpcsConfig, LayerCalibData, SearchSpace,
};
use qkit::kernels::{fixops_report, int_matmul_adalog, CostModel, MatmulShape, PathKind};
use qkit::layer::{linear, reparam_bias, reparam_shift};
use qkit::numeric::{gen_synthetic, matmul, mse, sqnr_db, SyntheticKind};
use qkit::pipeline::{build_toy_block, calibrate_block, calibration_set, evaluate_block, QuantPlan, ToyBlockConfig};
use qkit::quant::*;
use qkit::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Check {
    Check { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(lo..hi))
}

fn random_q(r: &mut ChaCha8Rng) -> u32 {
    let grid = q_grid(37);
    grid[r.random_range(0..grid.len())] as u32
}

/// Largest `|x − y| / (Σ_k |a_ik|·|b_kj|)`.
fn max_rel_err(x: &Matrix, y: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    let scale = matmul(&a.map(f64::abs), &b.map(f64::abs)).unwrap();
    x.data()
        .iter()
        .zip(y.data())
        .zip(scale.data())
        .map(|((p, q), s)| (p - q).abs() / s.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn c1_integer_path() -> Check {
    let mut r = rng(101);
    let (mut worst, trials) = (0.0f64, 1000);
    for t in 0..trials {
        let bit_a = 2 + (t % 7) as u8;
        let bit_b = r.random_range(2..=8u8);
        let (m, k, n) = (r.random_range(1..=32), r.random_range(1..=32), r.random_range(1..=32));
        let p = AdaLogParams::new(r.random_range(0.05..2.0), random_q(&mut r), 37, bit_a).unwrap();
        let a = Matrix::from_fn(m, k, |_, _| match r.random_range(0..10) {
            0 => 0.0,
            _ => r.random_range(0.0..1.2f64).powi(3),
        });
        let aq = adalog_quant(&a, &p);
        let bp = uniform_params_from_bounds(r.random_range(-2.0..-0.1), r.random_range(0.1..2.0), bit_b).unwrap();
        let bq = uniform_quant(&random_matrix(&mut r, k, n, -2.0, 2.0), &bp);
        let tables = build_adalog_tables(&p);
        let out = int_matmul_adalog(&aq, &tables, &bq).unwrap().values;
        let (a_hat, b_hat) = (adalog_dequant_via_tables(&aq, &tables, p.scale), uniform_dequant(&bq));
        let oracle = matmul(&a_hat, &b_hat).unwrap();
        worst = worst.max(max_rel_err(&out, &oracle, &a_hat, &b_hat));
    }
    check(worst <= 1e-12, format!("max relative error {worst:.2e} over {trials} trials (tol 1e-12)"))
}

fn c2_base_two_collapse() -> Check {
    let mut r = rng(102);
    let (mut code_diff, mut value_diff, mut total) = (0usize, 0usize, 0usize);
    while total < 1_000_000 {
        let bit = r.random_range(2..=8u8);
        let s = r.random_range(0.01..10.0);
        let ada = AdaLogParams::new(s, 37, 37, bit).unwrap();
        let log2 = LogFixedParams::new(s, bit, LogBase::Two).unwrap();
        for _ in 0..1000 {
            // log-uniform over [2^-12·s, 4·s]
            let a = s * r.random_range(-12.0..2.0f64).exp2();
            let (ca, cl) = (ada.code(a), log2.code(a));
            code_diff += (ca != cl) as usize;
            value_diff += (ada.dequant_code(ca).to_bits() != log2.dequant_code(cl).to_bits()) as usize;
        }
        total += 1000;
    }
    check(
        code_diff == 0 && value_diff == 0,
        format!("{code_diff} code and {value_diff} value mismatches over {total} inputs"),
    )
}

fn c3_table_contract() -> Check {
    let mut bad = Vec::new();
    let mut count = 0;
    for bit in [3u8, 4] {
        let max = max_code(bit) as u32;
        for q in q_grid(37) {
            let t = build_adalog_tables(&AdaLogParams::new(1.0, q as u32, 37, bit).unwrap());
            count += 1;
            let ok = t.len() == 1 << bit
                && t.mantissa.len() == 1 << bit
                && t.mantissa.iter().all(|&m| (max..=2 * max).contains(&m))
                && t.shift.windows(2).all(|w| w[0] <= w[1])
                && t.s_table() == 1.0 / (2.0 * max as f64);
            if !ok {
                bad.push((q, bit));
            }
        }
    }
    check(bad.is_empty(), format!("{count} tables checked, violations {bad:?}"))
}

fn c4_reparam_algebra() -> Check {
    let mut r = rng(104);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (p, m, t) = (r.random_range(1..=24), r.random_range(1..=24), r.random_range(1..=24));
        let w_hat = random_matrix(&mut r, p, m, -2.0, 2.0);
        let b: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = random_matrix(&mut r, t, m, -0.17, 3.0);
        let lhs = linear(&reparam_shift(&x), &w_hat, &reparam_bias(&b, &w_hat).unwrap()).unwrap();
        let rhs = linear(&x, &w_hat, &b).unwrap();
        let diff = lhs.data().iter().zip(rhs.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    check(worst <= 1e-12, format!("max |difference| {worst:.2e} over 100 cases (tol 1e-12)"))
}

fn c5_fpcs_quality() -> Check {
    let cfg = FpcsConfig::with_budget(128, 4).unwrap();
    let space = SearchSpace::from_anchors(&UNIT_ANCHORS, &cfg);
    let (ga, gb) = (linspace(0.0, 1.0, 129), linspace(0.0, 1.0, 65));
    let (trials, mut good, mut max_evals) = (200u64, 0u64, 0usize);
    for seed in 0..trials {
        let f = BumpsLoss::random(10_000 + seed);
        let loss = |a: f64, b: f64| f.eval(a, b);
        let fast = fpcs_search(&loss, &space, &cfg);
        let dense = brute_force_search(&loss, &ga, &gb);
        max_evals = max_evals.max(fast.evaluations);
        good += (fast.best.loss <= 1.05 * dense.best.loss) as u64;
    }
    check(
        good * 100 >= trials * 95 && max_evals <= 3008,
        format!("{good}/{trials} within 1.05x of dense (need 95%), max {max_evals} evaluations (limit 3008)"),
    )
}

/// Calibrates each quantizer directly on the probabilities (identity forward).
fn softmax_fidelity(seed: u64, bit: u8) -> ([f64; 3], [f64; 3], [f64; 3], Matrix) {
    let cfg = FpcsConfig::default();
    let p = gen_synthetic(SyntheticKind::SoftmaxRows, 64, 16, seed).unwrap();
    let id = |x: &Matrix| Ok(x.clone());
    let calib = LayerCalibData { input: &p, output: &p, forward: &id };
    let params = [
        search_adalog(&calib, bit, 37, &cfg).unwrap().params,
        search_log_fixed(&calib, bit, LogBase::Two, &cfg).unwrap().params,
        search_log_fixed(&calib, bit, LogBase::SqrtTwo, &cfg).unwrap().params,
    ];
    let (mut m, mut s, mut sat) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for (i, ps) in params.iter().enumerate() {
        let fq = fake_quant(&p, ps);
        m[i] = mse(&p, &fq).unwrap();
        s[i] = sqnr_db(&p, &fq).unwrap();
        let codes = quantize(&p, ps);
        sat[i] = codes.codes().iter().filter(|&&c| c == max_code(bit)).count() as f64 / codes.codes().len() as f64;
    }
    (m, s, sat, p)
}

fn c6_quantizer_ordering() -> Check {
    let seeds = 50;
    let (mut mse_ok, mut sqnr_wins) = ([0; 2], 0);
    for seed in 0..seeds {
        for (i, bit) in [3u8, 4].into_iter().enumerate() {
            let (m, s, _, _) = softmax_fidelity(seed, bit);
            mse_ok[i] += (m[0] <= m[1]) as u64;
            if bit == 3 {
                sqnr_wins += (s[0] >= s[2]) as u64;
            }
        }
    }
    check(
        mse_ok == [seeds, seeds] && sqnr_wins * 100 >= seeds * 80,
        format!(
            "AdaLog MSE <= log2: {}/{seeds} at 3-bit, {}/{seeds} at 4-bit (need all); SQNR >= log√2 at 3-bit: {sqnr_wins}/{seeds} (need 80%)",
            mse_ok[0], mse_ok[1]
        ),
    )
}

fn c7_saturation() -> Check {
    let mut wins = 0;
    let mut fractions = (0.0, 0.0);
    for seed in 0..20 {
        let (_, _, sat, _) = softmax_fidelity(500 + seed, 3);
        wins += (sat[2] > sat[1]) as u32;
        fractions.0 += sat[2] / 20.0;
        fractions.1 += sat[1] / 20.0;
    }
    check(
        wins == 20,
        format!("log√2 max-code fraction > log2 in {wins}/20 seeds (mean {:.3} vs {:.3})", fractions.0, fractions.1),
    )
}

fn c8_block_monotonicity() -> Check {
    let seeds = 50;
    let mut monotone = 0;
    for seed in 0..seeds {
        let cosines: Vec<f64> = [8u8, 6, 4, 3]
            .into_iter()
            .map(|bits| {
                let cfg = ToyBlockConfig { seed, bit_w: bits, bit_a: bits, ..Default::default() };
                let block = build_toy_block(&cfg).unwrap();
                let plan = calibrate_block(&block, &calibration_set(&cfg, 4, 1000 + seed)).unwrap().plan;
                evaluate_block(&block, &plan, &calibration_set(&cfg, 8, 5000 + seed)).unwrap().cosine
            })
            .collect();
        monotone += cosines.windows(2).all(|w| w[0] >= w[1]) as u64;
    }
    check(
        monotone * 100 >= seeds * 90,
        format!("cos W8/A8 >= W6/A6 >= W4/A4 >= W3/A3 in {monotone}/{seeds} seeds (need 90%)"),
    )
}

fn c9_cost_model() -> Check {
    let cost = CostModel::default();
    let shapes = [(1, 1, 1), (3, 5, 7), (8, 16, 8), (197, 64, 197), (197, 197, 64), (197, 192, 576), (197, 768, 3072)];
    let mut ordered = 0;
    let mut total = 0;
    for &(m, k, n) in &shapes {
        for a in 2..=8 {
            for b in 2..=8 {
                let shape = MatmulShape { m, k, n };
                let ada = fixops_report(shape, PathKind::Adalog, a, b, &cost).fixops;
                let ls = fixops_report(shape, PathKind::Logsqrt2, a, b, &cost).fixops;
                ordered += (ada < ls) as u32;
                total += 1;
            }
        }
    }
    let f = |m, k, n, path, a, b| fixops_report(MatmulShape { m, k, n }, path, a, b, &cost).fixops;
    let hand = [
        (f(197, 197, 64, PathKind::Adalog, 4, 4), 776_180.0),
        (f(197, 197, 64, PathKind::Logsqrt2, 4, 4), 10_090_340.0),
        (f(8, 16, 8, PathKind::Adalog, 3, 5), 320.0),
        (f(8, 16, 8, PathKind::Logsqrt2, 3, 5), 4_608.0),
        (f(8, 16, 8, PathKind::Uniform, 3, 5), 240.0),
        (f(197, 768, 3072, PathKind::Adalog, 8, 8), 522_878_976.0),
        (f(197, 768, 3072, PathKind::Logsqrt2, 8, 8), 1_859_730_432.0),
        (f(197, 768, 3072, PathKind::Uniform, 8, 8), 464_781_312.0),
    ];
    let exact = hand.iter().filter(|(got, want)| got == want).count();
    check(
        ordered == total && exact == hand.len(),
        format!("AdaLog < log√2 on {ordered}/{total} shape×bit cases; {exact}/{} hand counts exact", hand.len()),
    )
}

fn c10_cli_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_qkit"))
            .current_dir(dir.path())
            .args(["calibrate", "--seed", "7", "--out", out])
            .output()
            .unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    if !a.status.success() || !b.status.success() {
        return check(false, format!("calibrate failed: {}", String::from_utf8_lossy(&a.stderr)));
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    let identical = read("a.json") == read("b.json");
    let plan = QuantPlan::from_json(&String::from_utf8(read("a.json")).unwrap()).unwrap();
    let rows = String::from_utf8(read("a.trace.csv")).unwrap().lines().count() - 1;
    let traces_equal = read("a.trace.csv") == read("b.trace.csv");
    check(
        identical && traces_equal && rows <= plan.evaluation_budget() && rows == plan.evaluations(),
        format!(
            "plan JSON identical: {identical}, traces identical: {traces_equal}, {rows} trace rows (budget {})",
            plan.evaluation_budget()
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, u64, fn() -> Check);
    let criteria: [Criterion; 10] = [
        (1, "integer-path oracle equivalence", 30, c1_integer_path),
        (2, "base-2 collapse", 5, c2_base_two_collapse),
        (3, "table contract", 1, c3_table_contract),
        (4, "bias-reparameterization algebra", 1, c4_reparam_algebra),
        (5, "FPCS quality and budget", 60, c5_fpcs_quality),
        (6, "quantizer ordering on softmax data", 120, c6_quantizer_ordering),
        (7, "max-code saturation", 10, c7_saturation),
        (8, "end-to-end fidelity monotonicity", 120, c8_block_monotonicity),
        (9, "cost-model ordering", 1, c9_cost_model),
        (10, "calibration determinism and budget", 30, c10_cli_determinism),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        let start = Instant::now();
        let c = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = c.pass && in_time;
        failed += !pass as u32;
        println!(
            "{} criterion {n:>2} {name}: {} [{:.2} s, limit {budget} s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
