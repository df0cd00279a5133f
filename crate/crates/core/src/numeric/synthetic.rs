use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{activation::gelu_scalar, softmax_rows, Matrix};
use crate::error::QkitError;

/// Standard deviation of the Gaussian logits behind [`SyntheticKind::SoftmaxRows`].
pub const SOFTMAX_LOGIT_STD: f64 = 2.0;

/// Distributions of the synthetic activation generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Softmax over Gaussian logits with std [`SOFTMAX_LOGIT_STD`]; each row
    /// is a probability vector with a power-law-like histogram.
    SoftmaxRows,
    /// GELU applied to standard normal samples.
    GeluOfGaussian,
    Gaussian,
    Uniform01,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [Self::SoftmaxRows, Self::GeluOfGaussian, Self::Gaussian, Self::Uniform01];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SoftmaxRows => "softmax-rows",
            Self::GeluOfGaussian => "gelu-of-gaussian",
            Self::Gaussian => "gaussian",
            Self::Uniform01 => "uniform01",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = QkitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            QkitError::InvalidParam(format!(
                "unknown synthetic kind '{s}' (expected softmax-rows, gelu-of-gaussian, gaussian or uniform01)"
            ))
        })
    }
}

/// Seeded generator used across the crate: ChaCha with 8 rounds
/// (`rand_chacha::ChaCha8Rng::seed_from_u64`).
pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Deterministic synthetic activations; a pure function of its arguments.
pub fn gen_synthetic(kind: SyntheticKind, rows: usize, cols: usize, seed: u64) -> crate::Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(QkitError::Shape(format!("{rows}x{cols} has a zero dimension")));
    }
    let mut rng = rng(seed);
    Ok(match kind {
        SyntheticKind::SoftmaxRows => softmax_rows(&gaussian_matrix(&mut rng, rows, cols, SOFTMAX_LOGIT_STD)),
        SyntheticKind::GeluOfGaussian => gaussian_matrix(&mut rng, rows, cols, 1.0).map(gelu_scalar),
        SyntheticKind::Gaussian => gaussian_matrix(&mut rng, rows, cols, 1.0),
        SyntheticKind::Uniform01 => Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in SyntheticKind::ALL {
            let a = gen_synthetic(kind, 5, 9, 42).unwrap();
            let b = gen_synthetic(kind, 5, 9, 42).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, gen_synthetic(kind, 5, 9, 43).unwrap());
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let m = gen_synthetic(SyntheticKind::SoftmaxRows, 20, 33, 1).unwrap();
        for s in m.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn gelu_bound_holds() {
        let m = gen_synthetic(SyntheticKind::GeluOfGaussian, 50, 50, 3).unwrap();
        assert!(m.min() >= -0.1701);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SyntheticKind::ALL {
            assert_eq!(kind.as_str().parse::<SyntheticKind>().unwrap(), kind);
        }
        assert!("laplace".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(gen_synthetic(SyntheticKind::Gaussian, 0, 3, 0).is_err());
    }
}
