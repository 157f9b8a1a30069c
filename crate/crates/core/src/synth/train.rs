use rand::Rng;
use serde::Serialize;

use super::scenario::{rng_for, SyntheticTask};
use crate::adapter::LoraPair;
use crate::error::{Error, Result};
use crate::tensor::dense::Mat64;
use crate::tensor::{matmul, Matrix};

/// Module name used for every synthetic adapter.
pub const MODULE_NAME: &str = "proj";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainStats {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
    /// `‖BA − B*A*‖_F / ‖B*A*‖_F` after training.
    pub recovery_error: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedAdapter {
    pub pair: LoraPair,
    pub stats: TrainStats,
}

/// Fits a rank-`r` adapter `(B, A)` to the task by full-batch gradient
/// descent on the mean squared error of `(W0 + BA) x` against the labels.
///
/// `B` starts at zero and `A` uniform in `±1/√d_in` drawn from `seed`, so
/// the initial update is zero.
pub fn train_adapter(task: &SyntheticTask, r: usize, steps: usize, lr: f64, seed: u64) -> Result<TrainedAdapter> {
    let (d_out, d_in) = task.w0.shape();
    if r == 0 || r > d_out.min(d_in) {
        return Err(Error::Validation(format!(
            "rank {r} must lie in 1..={}",
            d_out.min(d_in)
        )));
    }
    let n = task.train_inputs.cols() as f64;

    // Sufficient statistics of the quadratic loss in M = BA:
    //   loss(M) = (tr(M Σ Mᵀ) − 2 tr(M Gᵀ) + c) / d_out
    // with Σ = X Xᵀ / n, G = (Y − W0 X) Xᵀ / n, c = ‖Y − W0 X‖² / n.
    let x = Mat64::from_matrix(&task.train_inputs);
    let resid = Mat64::from_matrix(&task.train_labels.sub(&matmul(&task.w0, &task.train_inputs)?)?);
    let xt = x.transpose();
    let mut sigma = x.matmul(&xt);
    sigma.data.iter_mut().for_each(|v| *v /= n);
    let mut g = resid.matmul(&xt);
    g.data.iter_mut().for_each(|v| *v /= n);
    let c = resid.data.iter().map(|v| v * v).sum::<f64>() / n;

    let bound = 1.0 / (d_in as f64).sqrt();
    let mut rng = rng_for(seed, &["lora_init"]);
    let mut a = Mat64::zeros(r, d_in);
    for v in a.data.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    let mut b = Mat64::zeros(d_out, r);

    let loss_of = |b: &Mat64, a: &Mat64| -> f64 {
        let m = b.matmul(a);
        let ms = m.matmul(&sigma);
        let quad: f64 = ms.data.iter().zip(&m.data).map(|(x, y)| x * y).sum();
        let lin: f64 = m.data.iter().zip(&g.data).map(|(x, y)| x * y).sum();
        (quad - 2.0 * lin + c) / d_out as f64
    };
    let initial_loss = loss_of(&b, &a);
    let scale = 2.0 / d_out as f64;
    for step in 0..steps {
        // E = (B A Σ − G) · 2/d_out is the gradient with respect to M.
        let a_sigma = a.matmul(&sigma);
        let mut e = b.matmul(&a_sigma);
        for (ev, gv) in e.data.iter_mut().zip(&g.data) {
            *ev = (*ev - gv) * scale;
        }
        let grad_b = e.matmul(&a.transpose());
        let grad_a = b.transpose().matmul(&e);
        for (v, d) in b.data.iter_mut().zip(&grad_b.data) {
            *v -= lr * d;
        }
        for (v, d) in a.data.iter_mut().zip(&grad_a.data) {
            *v -= lr * d;
        }
        if !b.data.iter().chain(&a.data).all(|v| v.is_finite()) || b.data.iter().any(|v| v.abs() > 1e15) {
            return Err(Error::Numeric(format!(
                "training diverged at step {step} with learning rate {lr}; try a smaller learning rate"
            )));
        }
    }
    let final_loss = loss_of(&b, &a);
    let pair = LoraPair::new(MODULE_NAME, a.to_matrix(), b.to_matrix())?;
    let recovery_error = pair.compose().relative_error(&task.target_delta())?;
    Ok(TrainedAdapter {
        pair,
        stats: TrainStats {
            initial_loss,
            final_loss,
            steps,
            recovery_error,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    /// `‖ΔW − B*A*‖_F / ‖B*A*‖_F`
    pub rel_err: f64,
    /// Mean squared error of `(W0 + ΔW) x` on held-out inputs.
    pub mse: f64,
}

/// Scores an update against one task's ground truth.
pub fn evaluate(w0: &Matrix, merged: &LoraPair, task: &SyntheticTask) -> Result<Evaluation> {
    if w0.shape() != (merged.d_out(), merged.d_in()) {
        return Err(Error::Shape(format!(
            "base weight is {}x{} but update is {}x{}",
            w0.rows(),
            w0.cols(),
            merged.d_out(),
            merged.d_in()
        )));
    }
    let delta = merged.compose();
    let rel_err = delta.relative_error(&task.target_delta())?;
    let pred = matmul(&w0.add(&delta)?, &task.eval_inputs)?;
    let sq: f64 = pred
        .as_slice()
        .iter()
        .zip(task.eval_labels.as_slice())
        .map(|(&p, &y)| (p as f64 - y as f64).powi(2))
        .sum();
    Ok(Evaluation {
        rel_err,
        mse: sq / pred.numel() as f64,
    })
}
