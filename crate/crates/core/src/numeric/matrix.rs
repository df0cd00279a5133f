use serde::{Deserialize, Serialize};

use crate::error::{QkitError, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(QkitError::Shape(format!("{rows}x{cols} has a zero dimension")));
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(QkitError::Shape(format!(
                "{rows}x{cols} needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(QkitError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of finite arithmetic.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(QkitError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_parts(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// Adds `bias[j]` to every entry of column `j`.
    pub fn add_row_vector(&self, bias: &[f64]) -> Result<Self> {
        if bias.len() != self.cols {
            return Err(QkitError::Shape(format!("bias of length {} for {} columns", bias.len(), self.cols)));
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// `self · 1`, the vector of row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    /// Columns `start..start+len` as a new matrix.
    pub fn col_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.cols || len == 0 {
            return Err(QkitError::Shape(format!("column slice {start}..{} of {} columns", start + len, self.cols)));
        }
        Ok(Self::from_fn(self.rows, len, |i, j| self.get(i, start + j)))
    }

    /// Rows `start..start+len` as a new matrix.
    pub fn row_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows || len == 0 {
            return Err(QkitError::Shape(format!("row slice {start}..{} of {} rows", start + len, self.rows)));
        }
        Ok(Self::from_parts(len, self.cols, self.data[start * self.cols..(start + len) * self.cols].to_vec()))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[Matrix]) -> Result<Self> {
        let first = parts.first().ok_or(QkitError::Empty("vstack"))?;
        if parts.iter().any(|p| p.cols != first.cols) {
            return Err(QkitError::Shape("vstack column mismatch".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self::from_parts(rows, first.cols, data))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Standard matrix product with `f64` accumulation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(QkitError::Shape(format!("matmul {}x{} by {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        let mut j = 0;
        // accumulators for TILE columns stay in registers across the k loop;
        // every entry is still summed over p in ascending order
        while j + TILE <= n {
            let mut acc = [0.0; TILE];
            for (p, &aip) in arow.iter().enumerate() {
                let brow = &b.data[p * n + j..p * n + j + TILE];
                for l in 0..TILE {
                    acc[l] += aip * brow[l];
                }
            }
            orow[j..j + TILE].copy_from_slice(&acc);
            j += TILE;
        }
        for (jj, o) in orow.iter_mut().enumerate().skip(j) {
            let mut acc = 0.0;
            for (p, &aip) in arow.iter().enumerate() {
                acc += aip * b.data[p * n + jj];
            }
            *o = acc;
        }
    }
    Ok(Matrix::from_parts(m, n, out))
}

const TILE: usize = 8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(matches!(Matrix::new(1, 2, vec![1.0, f64::NAN]), Err(QkitError::NonFinite { index: 1 })));
    }

    #[test]
    fn tiled_product_matches_plain_loop_bitwise() {
        for (m, k, n) in [(1, 1, 1), (3, 7, 8), (5, 9, 17), (4, 33, 31), (2, 3, 24)] {
            let a = Matrix::from_fn(m, k, |i, j| {
                ((i * 31 + j * 7) as f64 * 0.37).sin() * if j % 5 == 0 { 0.0 } else { 1.0 }
            });
            let b = Matrix::from_fn(k, n, |i, j| ((i * 13 + j * 3) as f64 * 0.91).cos());
            let plain = Matrix::from_fn(m, n, |i, j| (0..k).fold(0.0, |acc, p| acc + a.get(i, p) * b.get(p, j)));
            let fast = matmul(&a, &b).unwrap();
            assert!(fast.data().iter().zip(plain.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{m}x{k}x{n}");
        }
    }

    #[test]
    fn identity_product() {
        let b = Matrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn mismatch_is_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(QkitError::Shape(_))));
    }

    #[test]
    fn row_sums_and_bias() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -3.0]]).unwrap();
        assert_eq!(m.row_sums(), vec![3.0, 0.0]);
        let biased = m.add_row_vector(&[1.0, -1.0]).unwrap();
        assert_eq!(biased.data(), &[2.0, 1.0, 4.0, -4.0]);
        assert!(m.add_row_vector(&[1.0]).is_err());
    }
}
