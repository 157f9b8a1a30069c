#![allow(dead_code)]

use lora_merge::{AdapterSet, LoraPair, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `±scale`.
pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `n` adapter sets with the same module layout and random factors.
pub fn random_sets(
    rng: &mut ChaCha8Rng,
    n: usize,
    modules: usize,
    d_out: usize,
    d_in: usize,
    r: usize,
) -> Vec<AdapterSet> {
    (0..n)
        .map(|t| {
            let mut set = AdapterSet::new(format!("task{t}"));
            for m in 0..modules {
                let a = uniform(rng, r, d_in, 1.0 / (d_in as f32).sqrt());
                let b = uniform(rng, d_out, r, 1.0);
                set.insert(LoraPair::new(format!("layer{m}.proj"), a, b).unwrap()).unwrap();
            }
            set
        })
        .collect()
}

/// Row-major `f64` matrix used by the straight-line oracles.
#[derive(Clone, Debug)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn of(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn mul(&self, o: &Dense) -> Dense {
        assert_eq!(self.cols, o.rows);
        let mut out = Dense::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let x = self.at(i, k);
                for j in 0..o.cols {
                    out.data[i * o.cols + j] += x * o.at(k, j);
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, o: &Dense) {
        for (x, y) in self.data.iter_mut().zip(&o.data) {
            *x += y;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `‖x − y‖_F / max(‖y‖_F, tiny)`.
pub fn rel_err(x: &Dense, y: &Dense) -> f64 {
    assert_eq!((x.rows, x.cols), (y.rows, y.cols));
    let diff: f64 = x.data.iter().zip(&y.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    diff / y.norm().max(1e-300)
}

/// Keep flags from sorting all entries by `(|v|, index)` and dropping the
/// first `floor(k · numel)`.
pub fn oracle_mask(m: &Matrix, k: f64) -> Vec<bool> {
    let v = m.as_slice();
    let drop = (k * v.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(a.cmp(&b)));
    let mut keep = vec![true; v.len()];
    for &i in &idx[..drop] {
        keep[i] = false;
    }
    keep
}

pub fn masked(m: &Matrix, keep: &[bool]) -> Dense {
    let mut d = Dense::of(m);
    for (x, &k) in d.data.iter_mut().zip(keep) {
        if !k {
            *x = 0.0;
        }
    }
    d
}

/// Spearman-style rank correlation of two equally long sequences.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    cov / var
}

/// `B = U diag(σ) Q`, `A = Qᵀ Vᵀ` with random orthonormal `U`, `V` and a
/// random rotation `Q`, so no row of `A` carries a single direction.
pub fn rotated_pair(rng: &mut ChaCha8Rng, d_out: usize, d_in: usize, sigma: &[f64]) -> LoraPair {
    let r = sigma.len();
    let u = lora_merge::tensor::thin_qr(&uniform(rng, d_out, r, 1.0)).unwrap().0;
    let v = lora_merge::tensor::thin_qr(&uniform(rng, d_in, r, 1.0)).unwrap().0;
    let q = lora_merge::tensor::thin_qr(&uniform(rng, r, r, 1.0)).unwrap().0;
    let b = lora_merge::tensor::matmul(&u.scale_columns(sigma).unwrap(), &q).unwrap();
    let a = lora_merge::tensor::matmul(&q.transpose(), &v.transpose()).unwrap();
    LoraPair::new("proj", a, b).unwrap()
}
