use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::space::{dedup_points, Candidate, FpcsConfig, SearchSpace};
use super::Objective;

/// One loss evaluation, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub a: f64,
    pub b: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Candidate,
    /// Number of objective calls; repeated candidates are served from a cache.
    pub evaluations: usize,
    /// Best loss in each round's candidate set (round 0 is the initial grid).
    pub round_best: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Lexicographic `(loss, a, b)`; NaN losses sort last.
fn rank(x: &Candidate, y: &Candidate) -> Ordering {
    let key = |c: &Candidate| if c.loss.is_nan() { f64::INFINITY } else { c.loss };
    key(x).total_cmp(&key(y)).then(x.a.total_cmp(&y.a)).then(x.b.total_cmp(&y.b))
}

struct Evaluator<'a, O: Objective + ?Sized> {
    objective: &'a O,
    cache: HashMap<(u64, u64), f64>,
    trace: Vec<TraceRow>,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn eval_all(&mut self, points: &[(f64, f64)], round: usize) -> Vec<Candidate> {
        let fresh: Vec<(f64, f64)> =
            points.iter().copied().filter(|&(a, b)| !self.cache.contains_key(&(a.to_bits(), b.to_bits()))).collect();
        let losses = parallel_losses(self.objective, &fresh);
        for (&(a, b), &loss) in fresh.iter().zip(&losses) {
            self.cache.insert((a.to_bits(), b.to_bits()), loss);
            self.trace.push(TraceRow { round, a, b, loss });
        }
        points.iter().map(|&(a, b)| Candidate { a, b, loss: self.cache[&(a.to_bits(), b.to_bits())] }).collect()
    }
}

#[cfg(feature = "parallel")]
fn parallel_losses<O: Objective + ?Sized>(objective: &O, points: &[(f64, f64)]) -> Vec<f64> {
    use rayon::prelude::*;
    points.par_iter().map(|&(a, b)| objective.loss(a, b)).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_losses<O: Objective + ?Sized>(objective: &O, points: &[(f64, f64)]) -> Vec<f64> {
    points.iter().map(|&(a, b)| objective.loss(a, b)).collect()
}

fn snap(v: f64, integer: bool) -> f64 {
    if integer {
        v.round()
    } else {
        v
    }
}

/// Progressive combining search over `space`.
///
/// The best candidate of every round survives into the next one, so the
/// returned loss never exceeds the best loss of the initial grid.
pub fn fpcs_search<O: Objective + ?Sized>(objective: &O, space: &SearchSpace, cfg: &FpcsConfig) -> SearchOutcome {
    let init = space.initial();
    let mut eval = Evaluator { objective, cache: HashMap::new(), trace: Vec::new() };
    let mut current = eval.eval_all(&init.points, 0);
    let mut round_best = vec![current.iter().min_by(|x, y| rank(x, y)).map_or(f64::INFINITY, |c| c.loss)];
    let (mut tau_a, mut tau_b) = (init.tau_a, init.tau_b);
    let (z1, z2) = (cfg.z1 as i64, cfg.z2 as i64);

    for round in 1..=cfg.p {
        current.sort_by(rank);
        current.truncate(cfg.k);
        tau_a /= 2.0 * cfg.z1 as f64;
        tau_b /= 2.0 * cfg.z2 as f64;
        let mut next = Vec::with_capacity(current.len() * ((2 * z1 + 1) * (2 * z2 + 1)) as usize);
        for c in &current {
            for i in -z1..=z1 {
                let a = c.a + snap(i as f64 * tau_a, space.a.integer);
                for j in -z2..=z2 {
                    let b = c.b + snap(j as f64 * tau_b, space.b.integer);
                    if (i == 0 && j == 0) || space.admits(a, b) {
                        next.push((a, b));
                    }
                }
            }
        }
        dedup_points(&mut next);
        current = eval.eval_all(&next, round);
        round_best.push(current.iter().min_by(|x, y| rank(x, y)).map_or(f64::INFINITY, |c| c.loss));
    }

    let best =
        current.iter().copied().min_by(rank).unwrap_or(Candidate { a: f64::NAN, b: f64::NAN, loss: f64::INFINITY });
    SearchOutcome { best, evaluations: eval.trace.len(), round_best, trace: eval.trace }
}

/// Exhaustive minimum over `grid_a × grid_b`.
pub fn brute_force_search<O: Objective + ?Sized>(objective: &O, grid_a: &[f64], grid_b: &[f64]) -> SearchOutcome {
    let mut points: Vec<(f64, f64)> = grid_a.iter().flat_map(|&a| grid_b.iter().map(move |&b| (a, b))).collect();
    dedup_points(&mut points);
    let mut eval = Evaluator { objective, cache: HashMap::new(), trace: Vec::new() };
    let all = eval.eval_all(&points, 0);
    let best = all.iter().copied().min_by(rank).unwrap_or(Candidate { a: f64::NAN, b: f64::NAN, loss: f64::INFINITY });
    SearchOutcome { best, evaluations: eval.trace.len(), round_best: vec![best.loss], trace: eval.trace }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingOutcome {
    pub outcome: SearchOutcome,
    /// Loss after each completed sweep.
    pub sweep_losses: Vec<f64>,
}

/// Coordinate descent on the grid: fix `b` and pick the best `a`, then fix
/// `a` and pick the best `b`. Starts at grid indices `start` and stops after
/// `sweeps` sweeps or when a sweep changes nothing.
pub fn alternating_search<O: Objective + ?Sized>(
    objective: &O,
    grid_a: &[f64],
    grid_b: &[f64],
    sweeps: usize,
    start: (usize, usize),
) -> AlternatingOutcome {
    let mut eval = Evaluator { objective, cache: HashMap::new(), trace: Vec::new() };
    let (mut ia, mut ib) = (start.0.min(grid_a.len().saturating_sub(1)), start.1.min(grid_b.len().saturating_sub(1)));
    let mut best = eval.eval_all(&[(grid_a[ia], grid_b[ib])], 0)[0];
    let mut sweep_losses = Vec::new();
    for sweep in 1..=sweeps {
        let before = (ia, ib);
        let line: Vec<(f64, f64)> = grid_a.iter().map(|&a| (a, grid_b[ib])).collect();
        let cands = eval.eval_all(&line, sweep);
        ia = pick(&cands, ia).0;
        let line: Vec<(f64, f64)> = grid_b.iter().map(|&b| (grid_a[ia], b)).collect();
        let cands = eval.eval_all(&line, sweep);
        let (idx, c) = pick(&cands, ib);
        (ib, best) = (idx, c);
        sweep_losses.push(best.loss);
        if (ia, ib) == before {
            break;
        }
    }
    let evaluations = eval.trace.len();
    AlternatingOutcome {
        outcome: SearchOutcome { best, evaluations, round_best: sweep_losses.clone(), trace: eval.trace },
        sweep_losses,
    }
}

/// Index of the best candidate, keeping `current` unless strictly improved.
fn pick(cands: &[Candidate], current: usize) -> (usize, Candidate) {
    let mut best = (current, cands[current]);
    for (i, c) in cands.iter().enumerate() {
        if c.loss < best.1.loss {
            best = (i, *c);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::space::{Anchors, Axis};
    use super::*;

    fn unit_space(cfg: &FpcsConfig) -> SearchSpace {
        let anchors = Anchors { pct0: 0.0, pct_lo: 1.0, pct_hi: 0.0, pct1: 1.0 };
        SearchSpace::from_anchors(&anchors, cfg)
    }

    #[test]
    fn zero_rounds_is_grid_brute_force() {
        let cfg = FpcsConfig { p: 0, ..FpcsConfig::default() };
        let space = unit_space(&cfg);
        let f = |a: f64, b: f64| (a - 0.33).powi(2) + (b - 0.71).powi(2) + 0.1 * (7.0 * a).sin();
        let out = fpcs_search(&f, &space, &cfg);
        let brute = brute_force_search(&f, &space.a.points, &space.b.points);
        assert_eq!(out.best, brute.best);
        assert_eq!(out.evaluations, 17 * 9);
    }

    #[test]
    fn convex_quadratic_converges() {
        let cfg = FpcsConfig::default();
        let space = unit_space(&cfg);
        let (a0, b0) = (0.4123, 0.8071);
        let f = move |a: f64, b: f64| (a - a0).powi(2) + (b - b0).powi(2);
        let out = fpcs_search(&f, &space, &cfg);
        let tau_a = (1.0 / 16.0) / 8f64.powi(4);
        let tau_b = (1.0 / 8.0) / 4f64.powi(4);
        assert!((out.best.a - a0).abs() <= tau_a, "{:?}", out.best);
        assert!((out.best.b - b0).abs() <= tau_b, "{:?}", out.best);
        assert!(out.evaluations <= cfg.evaluation_budget(17 * 9));
        assert!(out.round_best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn integer_axis_stays_integral_and_dedups() {
        let cfg = FpcsConfig::default();
        let space = SearchSpace::new(Axis::partition(0.0, 1.0, 16), Axis::integers(1..=20))
            .with_constraint(|_, q| (1.0..=20.0).contains(&q));
        let f = |a: f64, q: f64| (a - 0.5).powi(2) + (q - 7.3).powi(2);
        let out = fpcs_search(&f, &space, &cfg);
        assert_eq!(out.best.b, 7.0);
        assert!(out.trace.iter().all(|t| t.b.fract() == 0.0 && (1.0..=20.0).contains(&t.b)));
        let mut keys: Vec<_> = out.trace.iter().map(|t| (t.a.to_bits(), t.b.to_bits())).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), out.trace.len());
    }

    #[test]
    fn alternating_on_separable_loss() {
        let grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let f = |a: f64, b: f64| (a - 0.3).powi(2) + (b - 0.85).abs();
        let alt = alternating_search(&f, &grid, &grid, 5, (10, 10));
        let brute = brute_force_search(&f, &grid, &grid);
        assert_eq!(alt.sweep_losses[0], brute.best.loss);
        assert!(alt.sweep_losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_candidate_brute_force() {
        let f = |a: f64, b: f64| a + b;
        let out = brute_force_search(&f, &[2.0], &[3.0]);
        assert_eq!((out.best.a, out.best.b, out.best.loss), (2.0, 3.0, 5.0));
    }
}
