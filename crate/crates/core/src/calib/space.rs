use serde::{Deserialize, Serialize};

use crate::error::{QkitError, Result};
use crate::numeric::stats::quantile_sorted;

/// Search coefficients. `x·y` and `k·z1·z2` both equal the budget `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpcsConfig {
    pub x: usize,
    pub y: usize,
    pub z1: usize,
    pub z2: usize,
    pub k: usize,
    pub p: usize,
    pub n: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl Default for FpcsConfig {
    fn default() -> Self {
        Self { x: 16, y: 8, z1: 4, z2: 2, k: 16, p: 4, n: 128, alpha_lo: 0.1, alpha_hi: 0.9 }
    }
}

fn divisors(n: usize) -> impl Iterator<Item = usize> {
    (1..=n).filter(move |d| n.is_multiple_of(*d))
}

/// Divisor of `n` closest to `target` (ties go to the larger one).
fn divisor_near(n: usize, target: f64) -> usize {
    divisors(n)
        .min_by(|&a, &b| {
            let da = (a as f64 - target).abs();
            let db = (b as f64 - target).abs();
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(1)
}

impl FpcsConfig {
    /// Splits a budget `n` into `x·y` and `k·z1·z2` with roughly the default
    /// proportions (`x ≈ 2y`, `z ≈ 8`, `z1 ≈ 2·z2`). `n = 128` yields the
    /// defaults.
    pub fn with_budget(n: usize, p: usize) -> Result<Self> {
        if n == 0 {
            return Err(QkitError::InvalidParam("search budget n must be positive".into()));
        }
        let x = divisor_near(n, (2.0 * n as f64).sqrt());
        let z = divisor_near(n, 8.0f64.min(n as f64));
        let z1 = divisor_near(z, (2.0 * z as f64).sqrt());
        let cfg = Self { x, y: n / x, z1, z2: z / z1, k: n / z, p, n, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QkitError::InvalidParam(m));
        if [self.x, self.y, self.z1, self.z2, self.k, self.n].contains(&0) {
            return bad("FPCS coefficients x, y, z1, z2, k, n must be positive".into());
        }
        if self.x * self.y != self.n {
            return bad(format!("x·y = {} must equal n = {}", self.x * self.y, self.n));
        }
        if self.k * self.z1 * self.z2 != self.n {
            return bad(format!("k·z1·z2 = {} must equal n = {}", self.k * self.z1 * self.z2, self.n));
        }
        if !(0.0..=1.0).contains(&self.alpha_lo)
            || !(0.0..=1.0).contains(&self.alpha_hi)
            || self.alpha_lo > self.alpha_hi
        {
            return bad(format!("percentile knobs {} / {} must satisfy 0 ≤ lo ≤ hi ≤ 1", self.alpha_lo, self.alpha_hi));
        }
        Ok(())
    }

    /// Upper bound on loss evaluations for an initial grid of `initial` points.
    pub fn evaluation_budget(&self, initial: usize) -> usize {
        initial + self.p * self.k * (2 * self.z1 + 1) * (2 * self.z2 + 1)
    }
}

/// `(quantile 0, quantile alpha_lo, quantile alpha_hi, quantile 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub pct0: f64,
    pub pct_lo: f64,
    pub pct_hi: f64,
    pub pct1: f64,
}

pub fn percentile_anchors(values: &[f64], alpha_lo: f64, alpha_hi: f64) -> Result<Anchors> {
    if values.is_empty() {
        return Err(QkitError::Empty("percentile anchors"));
    }
    for a in [alpha_lo, alpha_hi] {
        if !(0.0..=1.0).contains(&a) {
            return Err(QkitError::InvalidParam(format!("percentile {a} outside [0, 1]")));
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Anchors {
        pct0: sorted[0],
        pct_lo: quantile_sorted(&sorted, alpha_lo),
        pct_hi: quantile_sorted(&sorted, alpha_hi),
        pct1: sorted[sorted.len() - 1],
    })
}

/// Initial points of one hyperparameter plus the stride that expansion
/// refines. `tau` may be negative when the partition runs downward.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub points: Vec<f64>,
    pub tau: f64,
    /// Candidate values are rounded to integers after expansion.
    pub integer: bool,
}

impl Axis {
    /// `{start + i·τ : i = 0..=steps}` with `τ = (end − start)/steps`. A
    /// degenerate interval collapses to the single point `start`.
    pub fn partition(start: f64, end: f64, steps: usize) -> Self {
        let tau = (end - start) / steps as f64;
        if tau == 0.0 || steps == 0 {
            return Self { points: vec![start], tau: 0.0, integer: false };
        }
        let points = (0..=steps).map(|i| if i == steps { end } else { start + i as f64 * tau }).collect();
        Self { points, tau, integer: false }
    }

    /// An explicit integer grid with unit stride.
    pub fn integers(values: impl IntoIterator<Item = i64>) -> Self {
        Self { points: values.into_iter().map(|v| v as f64).collect(), tau: 1.0, integer: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub a: f64,
    pub b: f64,
    pub loss: f64,
}

/// Candidates of one round together with the current strides.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<(f64, f64)>,
    pub tau_a: f64,
    pub tau_b: f64,
}

type Admissible = Box<dyn Fn(f64, f64) -> bool + Sync>;

/// The two axes and an optional admissibility predicate.
pub struct SearchSpace {
    pub a: Axis,
    pub b: Axis,
    admissible: Option<Admissible>,
}

impl std::fmt::Debug for SearchSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SearchSpace").field("a", &self.a).field("b", &self.b).finish_non_exhaustive()
    }
}

impl SearchSpace {
    pub fn new(a: Axis, b: Axis) -> Self {
        Self { a, b, admissible: None }
    }

    pub fn with_constraint(mut self, f: impl Fn(f64, f64) -> bool + Sync + 'static) -> Self {
        self.admissible = Some(Box::new(f));
        self
    }

    /// The space of the uniform quantizer: the first axis runs from the low
    /// percentile toward the minimum, the second from the high percentile
    /// toward the maximum.
    pub fn from_anchors(anchors: &Anchors, cfg: &FpcsConfig) -> Self {
        Self::new(
            Axis::partition(anchors.pct_lo, anchors.pct0, cfg.x),
            Axis::partition(anchors.pct_hi, anchors.pct1, cfg.y),
        )
    }

    pub fn admits(&self, a: f64, b: f64) -> bool {
        a.is_finite() && b.is_finite() && self.admissible.as_ref().is_none_or(|f| f(a, b))
    }

    /// `A × B`, filtered by the constraint, without duplicates.
    pub fn initial(&self) -> CandidateSet {
        let mut points = Vec::with_capacity(self.a.points.len() * self.b.points.len());
        for &a in &self.a.points {
            for &b in &self.b.points {
                if self.admits(a, b) {
                    points.push((a, b));
                }
            }
        }
        dedup_points(&mut points);
        CandidateSet { points, tau_a: self.a.tau, tau_b: self.b.tau }
    }
}

pub(crate) fn dedup_points(points: &mut Vec<(f64, f64)>) {
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    points.retain(|&(a, b)| seen.insert((a.to_bits(), b.to_bits())));
}

/// The initial candidate set for the uniform quantizer's anchors.
pub fn init_candidates(anchors: &Anchors, cfg: &FpcsConfig) -> CandidateSet {
    SearchSpace::from_anchors(anchors, cfg).initial()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_is_consistent() {
        let c = FpcsConfig::default();
        c.validate().unwrap();
        assert_eq!(FpcsConfig::with_budget(128, 4).unwrap(), c);
        assert_eq!(c.evaluation_budget(128), 128 + 4 * 16 * 45);
        for n in [1, 2, 12, 64, 100, 256, 97] {
            FpcsConfig::with_budget(n, 2).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn validation_errors() {
        let c = FpcsConfig { x: 15, ..FpcsConfig::default() };
        assert!(c.validate().is_err());
        let c = FpcsConfig { k: 8, ..FpcsConfig::default() };
        assert!(c.validate().is_err());
        let c = FpcsConfig { alpha_lo: 0.95, ..FpcsConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn anchors_of_ten() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let a = percentile_anchors(&v, 0.1, 0.9).unwrap();
        assert_eq!(a.pct0, 0.0);
        assert!((a.pct_lo - 0.9).abs() < 1e-12);
        assert!((a.pct_hi - 8.1).abs() < 1e-12);
        assert_eq!(a.pct1, 9.0);
        let c = percentile_anchors(&[2.5; 7], 0.1, 0.9).unwrap();
        assert!(c.pct0 == c.pct_lo && c.pct_lo == c.pct_hi && c.pct_hi == c.pct1);
        assert!(percentile_anchors(&[], 0.1, 0.9).is_err());
    }

    #[test]
    fn initial_grid() {
        let anchors = Anchors { pct0: 0.0, pct_lo: 1.0, pct_hi: 2.0, pct1: 4.0 };
        let cfg = FpcsConfig { x: 2, y: 4, k: 2, z1: 2, z2: 2, n: 8, ..FpcsConfig::default() };
        let space = SearchSpace::from_anchors(&anchors, &cfg);
        assert_eq!(space.a.points, vec![1.0, 0.5, 0.0]);
        assert_eq!(space.a.tau, -0.5);
        let set = init_candidates(&anchors, &cfg);
        assert_eq!(set.points.len(), 3 * 5);

        let flat = Anchors { pct0: 1.0, ..anchors };
        let set = init_candidates(&flat, &cfg);
        assert_eq!(set.points.len(), 5);
        assert_eq!(set.tau_a, 0.0);
    }
}
