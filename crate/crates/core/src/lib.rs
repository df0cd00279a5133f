//! Post-training quantization kernels built around an adaptive-base
//! logarithmic quantizer.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: dense matrices, activations, order statistics, synthetic
//!   data and the `QTENSOR1` file format.
//! - [`quant`]: uniform, log2, log√2 and AdaLog quantizers, plus the AdaLog
//!   shift/mantissa lookup tables.
//! - [`kernels`]: integer matmul paths (linear, log√2 float path, AdaLog
//!   table + shift path) and the FixOP cost model.
//! - [`layer`]: quantized linear layers, post-GELU bias reparameterization
//!   and the attention probability × value product.
//! - [`calib`]: the progressive combining search together with brute-force
//!   and alternating baselines.
//! - [`pipeline`]: a single-head toy transformer block with calibration,
//!   integer execution and fidelity reporting.

pub mod calib;
pub mod error;
pub mod kernels;
pub mod layer;
pub mod numeric;
pub mod pipeline;
pub mod quant;

pub use error::{QkitError, Result};
pub use numeric::Matrix;
