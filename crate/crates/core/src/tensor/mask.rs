use std::cmp::Ordering;

use super::Matrix;
use crate::error::{Error, Result};

/// Binary keep/prune flags with the shape of the matrix they came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Shape(format!(
                "mask {rows}x{cols} needs {} flags, got {}",
                rows * cols,
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_kept(&self, flat: usize) -> bool {
        self.bits[flat]
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pruned(&self) -> usize {
        self.bits.len() - self.kept()
    }

    /// Flat indices of pruned entries, ascending.
    pub fn pruned_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `floor(rate · numel)`, the number of entries a rate prunes.
pub fn pruned_count(rate: f64, numel: usize) -> usize {
    ((rate * numel as f64).floor() as usize).min(numel)
}

pub(crate) fn check_rate(name: &str, rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!(
            "{name} must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Flags the `floor(rate · numel)` smallest-magnitude entries with 0.
///
/// Entries are ordered by `(|value|, flat row-major index)`, so equal
/// magnitudes are pruned lowest index first.
pub fn magnitude_mask(m: &Matrix, rate: f64) -> Result<Mask> {
    check_rate("pruning rate", rate)?;
    let data = m.as_slice();
    let p = pruned_count(rate, data.len());
    let mut bits = vec![true; data.len()];
    if p > 0 {
        let by_magnitude = |&a: &usize, &b: &usize| -> Ordering {
            data[a]
                .abs()
                .total_cmp(&data[b].abs())
                .then(a.cmp(&b))
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        // The key is a total order with unique elements, so the first p
        // positions after selection are exactly the p smallest.
        if p < order.len() {
            order.select_nth_unstable_by(p - 1, by_magnitude);
        }
        for &i in &order[..p] {
            bits[i] = false;
        }
    }
    Ok(Mask {
        rows: m.rows(),
        cols: m.cols(),
        bits,
    })
}

/// Entry-wise product of a matrix with a mask.
pub fn apply_mask(m: &Matrix, mask: &Mask) -> Result<Matrix> {
    if m.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "apply_mask: matrix is {}x{}, mask is {}x{}",
            m.rows(),
            m.cols(),
            mask.rows,
            mask.cols
        )));
    }
    let data = m
        .as_slice()
        .iter()
        .zip(&mask.bits)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect();
    Ok(Matrix::from_vec_unchecked(m.rows(), m.cols(), data))
}

/// Row-wise sums of absolute values.
pub fn row_l1(m: &Matrix) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|v| v.abs() as f64).sum())
        .collect()
}
