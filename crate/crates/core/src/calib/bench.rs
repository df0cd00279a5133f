//! Synthetic two-parameter losses for comparing search strategies.

use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fpcs::{alternating_search, brute_force_search, fpcs_search};
use super::space::{Anchors, FpcsConfig, SearchSpace};
use crate::error::{QkitError, Result};
use crate::numeric::synthetic::rng;

/// Anchors of the unit square: the first axis runs from 1 down to 0, the
/// second from 0 up to 1.
pub const UNIT_ANCHORS: Anchors = Anchors { pct0: 0.0, pct_lo: 1.0, pct_hi: 0.0, pct1: 1.0 };

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// A smooth loss: a shallow bowl with a few Gaussian dips, offset so the
/// minimum is well above zero. Defined on (roughly) the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpsLoss {
    center: (f64, f64),
    bowl: f64,
    dips: Vec<Dip>,
}

#[derive(Debug, Clone, PartialEq)]
struct Dip {
    at: (f64, f64),
    depth: f64,
    width: (f64, f64),
}

impl BumpsLoss {
    pub fn random(seed: u64) -> Self {
        let mut rng = rng(seed);
        let center = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
        let dips = (0..3)
            .map(|_| Dip {
                at: (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)),
                depth: rng.random_range(0.2..0.6),
                width: (rng.random_range(0.08..0.3), rng.random_range(0.08..0.3)),
            })
            .collect();
        Self { center, bowl: rng.random_range(0.3..1.0), dips }
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let bowl = self.bowl * ((a - self.center.0).powi(2) + (b - self.center.1).powi(2));
        let dips: f64 = self
            .dips
            .iter()
            .map(|d| {
                let u = (a - d.at.0) / d.width.0;
                let v = (b - d.at.1) / d.width.1;
                d.depth * (-(u * u + v * v)).exp()
            })
            .sum();
        2.0 + bowl - dips
    }
}

/// Narrow diagonal valley `100(a − b)² + (a + b − 2)²`, minimum 0 at (1, 1).
/// Coordinate descent started off the valley floor stalls on a grid.
pub fn valley_loss(a: f64, b: f64) -> f64 {
    100.0 * (a - b).powi(2) + (a + b - 2.0).powi(2)
}

/// `(a − a0)² + (b − b0)²`.
pub fn quadratic_loss(a0: f64, b0: f64) -> impl Fn(f64, f64) -> f64 + Sync + Copy {
    move |a, b| (a - a0).powi(2) + (b - b0).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// [`BumpsLoss::random`] seeded by the bench seed.
    Bumps,
    /// [`valley_loss`] scaled onto the unit square.
    Valley,
    /// A quadratic with a seeded optimum inside the unit square.
    Quadratic,
}

impl FromStr for LossKind {
    type Err = QkitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bumps" => Ok(Self::Bumps),
            "valley" => Ok(Self::Valley),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(QkitError::InvalidParam(format!("unknown loss kind '{other}' (bumps, valley, quadratic)"))),
        }
    }
}

impl LossKind {
    /// The loss on the unit square.
    pub fn build(self, seed: u64) -> Box<dyn Fn(f64, f64) -> f64 + Sync> {
        match self {
            Self::Bumps => {
                let f = BumpsLoss::random(seed);
                Box::new(move |a, b| f.eval(a, b))
            }
            // valley over [0, 2]², minimum at (0.5, 0.5)
            Self::Valley => Box::new(|a, b| valley_loss(2.0 * a, 2.0 * b)),
            Self::Quadratic => {
                let mut r = rng(seed);
                Box::new(quadratic_loss(r.random_range(0.1..0.9), r.random_range(0.1..0.9)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub evals: usize,
    pub best_loss: f64,
    pub wall_ms: f64,
}

/// Runs FPCS, a dense brute force (`dense_a × dense_b` points) and
/// alternating search from the origin corner on the same loss.
pub fn run_bench(kind: LossKind, seed: u64, cfg: &FpcsConfig, dense: (usize, usize)) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let loss = kind.build(seed);
    let timed = |method: &str, f: &dyn Fn() -> super::SearchOutcome| {
        let t = Instant::now();
        let out = f();
        BenchRow {
            method: method.into(),
            evals: out.evaluations,
            best_loss: out.best.loss,
            wall_ms: t.elapsed().as_secs_f64() * 1e3,
        }
    };
    let space = SearchSpace::from_anchors(&UNIT_ANCHORS, cfg);
    let grid_a = linspace(0.0, 1.0, dense.0);
    let grid_b = linspace(0.0, 1.0, dense.1);
    let coarse_a = linspace(0.0, 1.0, cfg.x + 1);
    let coarse_b = linspace(0.0, 1.0, cfg.y + 1);
    Ok(vec![
        timed("fpcs", &|| fpcs_search(&loss, &space, cfg)),
        timed("brute", &|| brute_force_search(&loss, &grid_a, &grid_b)),
        timed("alternating", &|| alternating_search(&loss, &coarse_a, &coarse_b, 50, (0, 0)).outcome),
    ])
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,evals,best_loss,wall_ms\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.3}\n", r.method, r.evals, r.best_loss, r.wall_ms));
    }
    out
}
