//! Toy transformer block: full-precision reference, end-to-end
//! calibration into a [`QuantPlan`], and quantized execution with fidelity
//! metrics.
//!
//! Topology (single head, no residuals or normalization):
//! `softmax(Q·Kᵀ/√d)·V → Proj → FC1 → GELU → FC2` with `[Q K V] = X·W_qkvᵀ + b`.

mod block;
mod eval;
mod plan;

pub use block::{build_toy_block, calibration_set, Activations, ToyBlock, ToyBlockConfig, BIAS_STD};
pub use eval::{
    evaluate_block, histogram_bins, histogram_codes, histograms_csv, run_block_quantized, FidelityReport, HistBin,
    SiteHistogram,
};
pub use plan::{
    calibrate_block, ActivationSite, Calibration, LinearSitePlan, MatmulSitePlan, QuantPlan, SearchSummary, SiteTrace,
};
