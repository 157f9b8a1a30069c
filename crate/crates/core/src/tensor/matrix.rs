use std::fmt;

use crate::error::{Error, Result};
use crate::par;

/// Row-major dense matrix of finite `f32` values.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list()
                .entries(self.data.chunks(self.cols))
                .finish()?;
        }
        Ok(())
    }
}

impl Matrix {
    /// Builds a matrix, checking the length and that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data).expect("invalid matrix literal")
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("from_fn produced an invalid matrix")
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
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f32> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_vec_unchecked(self.cols, self.rows, out)
    }

    pub fn scale(&self, c: f32) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Matrix {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{op}: left operand is {}x{}, right operand is {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub(crate) fn zip_with(&self, other: &Matrix, f: impl Fn(f32, f32) -> f32) -> Matrix {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec_unchecked(self.rows, self.cols, data)
    }

    /// Multiplies column `j` by `factors[j]` (i.e. `self · diag(factors)`).
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Matrix> {
        if factors.len() != self.cols {
            return Err(Error::Shape(format!(
                "scale_columns: {} factors for {} columns",
                factors.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols) {
            for (v, &f) in row.iter_mut().zip(factors) {
                *v = (*v as f64 * f) as f32;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`; falls back to the absolute norm when
    /// `other` is zero.
    pub fn relative_error(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "relative_error")?;
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let base = other.frobenius_norm();
        Ok(if base > 0.0 { diff / base } else { diff })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max))
    }

    /// Concatenates matrices side by side.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("hstack of zero matrices".into()))?;
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::Shape(format!(
                "hstack: row count {} differs from {}",
                bad.rows, rows
            )));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(i));
            }
        }
        Ok(Self::from_vec_unchecked(rows, cols, data))
    }

    /// Concatenates matrices top to bottom.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("vstack of zero matrices".into()))?;
        let cols = first.cols;
        if let Some(bad) = parts.iter().find(|m| m.cols != cols) {
            return Err(Error::Shape(format!(
                "vstack: column count {} differs from {}",
                bad.cols, cols
            )));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Self::from_vec_unchecked(rows, cols, data))
    }
}

/// Matrix product `x · y`.
///
/// Each output entry is accumulated in `f64` over the inner index in
/// ascending order; rows are distributed over threads when the `parallel`
/// feature is on, which does not change any entry.
pub fn matmul(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols != y.rows {
        return Err(Error::Shape(format!(
            "matmul: left operand is {}x{}, right operand is {}x{} (inner dimensions {} != {})",
            x.rows, x.cols, y.rows, y.cols, x.cols, y.rows
        )));
    }
    let (m, k, n) = (x.rows, x.cols, y.cols);
    let mut out = vec![0.0f32; m * n];
    par::for_each_row(&mut out, n, |i, row| {
        let mut acc = vec![0.0f64; n];
        let xi = &x.data[i * k..(i + 1) * k];
        for (p, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let xv = xv as f64;
            let yp = &y.data[p * n..(p + 1) * n];
            for (a, &yv) in acc.iter_mut().zip(yp) {
                *a += xv * yv as f64;
            }
        }
        for (o, a) in row.iter_mut().zip(acc) {
            *o = a as f32;
        }
    });
    Ok(Matrix::from_vec_unchecked(m, n, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn projector_product() {
        let p = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        let m = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let out = matmul(&p, &m).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[5.0, 6.0], [0.0, 0.0]]));
    }

    #[test]
    fn column_product() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let ones = Matrix::from_rows(&[[1.0], [1.0]]);
        assert_eq!(
            matmul(&m, &ones).unwrap(),
            Matrix::from_rows(&[[3.0], [7.0]])
        );
    }

    #[test]
    fn mismatch_names_both_operands() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("inner"), "{err}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f32::NAN]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(Matrix::new(2, 2, vec![1.0]), Err(Error::Shape(_))));
        assert!(matches!(Matrix::new(0, 2, vec![]), Err(Error::Shape(_))));
    }

    #[test]
    fn stacking() {
        let a = Matrix::from_rows(&[[1.0], [2.0]]);
        let b = Matrix::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        let h = Matrix::hstack(&[&a, &b]).unwrap();
        assert_eq!(h, Matrix::from_rows(&[[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]]));
        let v = Matrix::vstack(&[&b, &b]).unwrap();
        assert_eq!(v.shape(), (4, 2));
        assert!(Matrix::vstack(&[&a, &b]).is_err());
    }
}
