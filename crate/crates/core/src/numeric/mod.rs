//! Dense real matrices and the numeric helpers every other module builds on.

mod activation;
mod matrix;
pub(crate) mod stats;
pub(crate) mod synthetic;
mod tensor_io;

pub use activation::{gelu, gelu_scalar, softmax_rows};
pub use matrix::{matmul, Matrix};
pub use stats::{cosine_similarity, mse, quantile, sqnr_db};
pub use synthetic::{gen_synthetic, SyntheticKind};
pub use tensor_io::{decode_tensor, encode_tensor, read_tensor, write_tensor, TENSOR_MAGIC};
