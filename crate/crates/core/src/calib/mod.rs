//! Two-hyperparameter calibration search.
//!
//! [`fpcs_search`] is the progressive combining search: evaluate a coarse
//! Cartesian grid, keep the `k` best candidates, shrink both strides by
//! `2·z1` / `2·z2`, expand every survivor to a `(2z1+1)×(2z2+1)` patch, and
//! repeat for `p` rounds. [`brute_force_search`] and [`alternating_search`]
//! are the exhaustive and coordinate-descent baselines.

mod adapters;
pub mod bench;
mod fpcs;
mod space;

pub use adapters::{
    log_axis_for, q_grid, search_adalog, search_log_fixed, search_uniform_activation, ForwardFn, LayerCalibData,
    SearchResult,
};
pub use fpcs::{alternating_search, brute_force_search, fpcs_search, AlternatingOutcome, SearchOutcome, TraceRow};
pub use space::{init_candidates, percentile_anchors, Anchors, Axis, Candidate, CandidateSet, FpcsConfig, SearchSpace};

/// Loss over a pair of hyperparameters. Implemented for closures.
pub trait Objective: Sync {
    fn loss(&self, a: f64, b: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Sync> Objective for F {
    fn loss(&self, a: f64, b: f64) -> f64 {
        self(a, b)
    }
}
