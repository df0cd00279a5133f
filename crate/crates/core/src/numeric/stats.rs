use super::Matrix;
use crate::error::{QkitError, Result};

/// Linear-interpolation quantile at position `alpha·(n−1)` of the sorted
/// values (the "inclusive" convention).
pub fn quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(QkitError::Empty("quantile"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(QkitError::InvalidParam(format!("quantile alpha {alpha} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, alpha))
}

pub(crate) fn quantile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let pos = alpha * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(QkitError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared element-wise difference.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(Σ ref² / Σ (ref − test)²)`; infinite when the two agree exactly.
pub fn sqnr_db(reference: &Matrix, test: &Matrix) -> Result<f64> {
    same_shape(reference, test)?;
    let signal: f64 = reference.data().iter().map(|v| v * v).sum();
    let noise: f64 = reference.data().iter().zip(test.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(if noise == 0.0 { f64::INFINITY } else { 10.0 * (signal / noise).log10() })
}

/// Cosine of the angle between the flattened matrices, clamped to [−1, 1].
pub fn cosine_similarity(a: &Matrix, b: &Matrix) -> Result<f64> {
    same_shape(a, b)?;
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let na: f64 = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(if na == nb { 1.0 } else { 0.0 });
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
