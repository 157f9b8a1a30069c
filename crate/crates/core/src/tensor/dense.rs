//! `f64` working matrices used inside the factorization kernels.

use super::Matrix;

#[derive(Clone, Debug)]
pub(crate) struct Mat64 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let acc = &mut out.data[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in acc.iter_mut().zip(&other.data[p * n..(p + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }
}

/// Householder thin QR of an `m x n` matrix with `m >= n`.
///
/// Returns `Q` (`m x n`, orthonormal columns) and upper-triangular `R`
/// (`n x n`) with a non-negative diagonal.
pub(crate) fn householder_qr(a: &Mat64) -> (Mat64, Mat64) {
    let (m, n) = (a.rows, a.cols);
    debug_assert!(m >= n);
    let mut work = a.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);

    for j in 0..n {
        let norm = (j..m).map(|i| work.at(i, j).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let x0 = work.at(j, j);
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| work.at(i, j)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            reflectors.push(None);
            continue;
        }
        for c in j..n {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(t, vt)| vt * work.at(j + t, c))
                .sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vt) in v.iter().enumerate() {
                *work.at_mut(j + t, c) -= f * vt;
            }
        }
        reflectors.push(Some(v));
    }

    let mut r = Mat64::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            *r.at_mut(i, j) = work.at(i, j);
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = Mat64::zeros(m, n);
    for i in 0..n {
        *q.at_mut(i, i) = 1.0;
    }
    for j in (0..n).rev() {
        let Some(v) = &reflectors[j] else { continue };
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for c in 0..n {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(t, vt)| vt * q.at(j + t, c))
                .sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vt) in v.iter().enumerate() {
                *q.at_mut(j + t, c) -= f * vt;
            }
        }
    }

    for i in 0..n {
        if r.at(i, i) < 0.0 {
            for c in i..n {
                *r.at_mut(i, c) = -r.at(i, c);
            }
            for row in 0..m {
                *q.at_mut(row, i) = -q.at(row, i);
            }
        }
    }
    (q, r)
}

pub(crate) const JACOBI_TOL: f64 = 1e-12;
pub(crate) const JACOBI_MAX_SWEEPS: usize = 100;

/// Result of a one-sided Jacobi SVD in `f64`.
pub(crate) struct Svd64 {
    pub u: Mat64,
    pub sigma: Vec<f64>,
    pub v: Mat64,
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Err carries the largest remaining normalized off-diagonal coupling.
pub(crate) fn one_sided_jacobi(c: &Mat64) -> Result<Svd64, f64> {
    let q = c.rows;
    debug_assert_eq!(q, c.cols);
    // Work column-major: cols[j] is column j of C·V.
    let mut w: Vec<Vec<f64>> = (0..q).map(|j| c.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = q < 2;
    let mut residual = 0.0f64;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = 0.0;
        for p in 0..q {
            for r in p + 1..q {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[r].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[r]).map(|(a, b)| a * b).sum();
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || scale == 0.0 {
                    continue;
                }
                let coupling = gamma.abs() / scale;
                residual = residual.max(coupling);
                if coupling <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, p, r, cs, sn);
                rotate(&mut v, p, r, cs, sn);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(residual);
    }

    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let mut u = Mat64::zeros(q, q);
    let mut vm = Mat64::zeros(q, q);
    let mut sigma = Vec::with_capacity(q);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        for (i, &x) in v[src].iter().enumerate() {
            *vm.at_mut(i, dst) = x;
        }
        if s > f64::MIN_POSITIVE * 1e10 {
            for (i, &x) in w[src].iter().enumerate() {
                *u.at_mut(i, dst) = x / s;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd64 { u, sigma, v: vm })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, r: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(r);
    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = cs * x - sn * y;
        *b = sn * x + cs * y;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, drawn from the standard basis in index order.
pub(crate) fn complete_orthonormal(u: &mut Mat64, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = u.rows;
    let mut filled: Vec<usize> = (0..u.cols).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0usize;
    for &dst in missing {
        loop {
            assert!(candidate < m, "cannot complete orthonormal basis");
            let mut x = vec![0.0; m];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let dot: f64 = (0..m).map(|i| u.at(i, j) * x[i]).sum();
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi -= dot * u.at(i, j);
                    }
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (i, xi) in x.iter().enumerate() {
                    *u.at_mut(i, dst) = xi / norm;
                }
                filled.push(dst);
                break;
            }
        }
    }
}

/// Makes the first component of each `v` column with magnitude above
/// `1e-6` non-negative, flipping the matching `u` column with it.
pub(crate) fn canonicalize_signs(u: &mut Mat64, v: &mut Mat64) {
    for j in 0..v.cols {
        let lead = (0..v.rows).map(|i| v.at(i, j)).find(|x| x.abs() > 1e-6);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..v.rows {
                *v.at_mut(i, j) = -v.at(i, j);
            }
            for i in 0..u.rows {
                *u.at_mut(i, j) = -u.at(i, j);
            }
        }
    }
}
