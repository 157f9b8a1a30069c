//! Task Arithmetic, Ties-merging and DARE applied to the LoRA factors.
//!
//! All three operate on the `A` stack and the `B` stack independently; none
//! materializes `ΔW`.

use super::{run_per_module, weighted_sum, MergeConfig, MergeReport, Method, ModuleReport};
use crate::adapter::{AdapterSet, LORA_A_SUFFIX, LORA_B_SUFFIX};
use crate::error::Result;
use crate::rng;
use crate::tensor::{apply_mask, magnitude_mask, Matrix};

/// `A_m = Σ A_n`, `B_m = (λ/N) Σ B_n`.
fn sum_combine(a_parts: &[Matrix], b_parts: &[Matrix], lambda: f64) -> (Matrix, Matrix) {
    let n = a_parts.len() as f64;
    (weighted_sum(a_parts, 1.0), weighted_sum(b_parts, lambda / n))
}

/// Task Arithmetic on the factors: `B_m · A_m = (λ/N)(Σ B_n)(Σ A_n)`.
///
/// The `1/N` makes this coincide with the complementary-scaling merge at
/// prune rate 0; it is recorded as `norm_factor` in the report.
pub fn task_arithmetic_merge(sets: &[AdapterSet], cfg: &MergeConfig) -> Result<(AdapterSet, MergeReport)> {
    let norm = 1.0 / sets.len().max(1) as f64;
    run_per_module(sets, cfg, Method::TaskArithmetic, Some(norm), |inputs| {
        let a: Vec<Matrix> = inputs.pairs.iter().map(|p| p.a.clone()).collect();
        let b: Vec<Matrix> = inputs.pairs.iter().map(|p| p.b.clone()).collect();
        let (a_m, b_m) = sum_combine(&a, &b, cfg.lambda);
        let zeros = vec![0; inputs.pairs.len()];
        Ok((
            a_m,
            b_m,
            ModuleReport {
                pruned_a: zeros.clone(),
                pruned_b: zeros,
                ..Default::default()
            },
        ))
    })
}

/// Trim, elect sign, disjoint mean over one stack of same-shaped tensors.
///
/// Returns the merged tensor and the per-task trimmed counts.
pub(crate) fn ties_stack(parts: &[&Matrix], prune_rate: f64) -> Result<(Matrix, Vec<usize>)> {
    let mut trimmed = Vec::with_capacity(parts.len());
    let mut counts = Vec::with_capacity(parts.len());
    for m in parts {
        let mask = magnitude_mask(m, prune_rate)?;
        counts.push(mask.pruned());
        trimmed.push(apply_mask(m, &mask)?);
    }
    let (rows, cols) = parts[0].shape();
    let merged = (0..rows * cols)
        .map(|idx| {
            let total: f64 = trimmed.iter().map(|t| t.as_slice()[idx] as f64).sum();
            // A zero total elects the non-negative sign.
            let positive = total >= 0.0;
            let (sum, count) = trimmed
                .iter()
                .map(|t| t.as_slice()[idx])
                .filter(|&v| v != 0.0 && (v > 0.0) == positive)
                .fold((0.0f64, 0usize), |(s, c), v| (s + v as f64, c + 1));
            if count == 0 {
                0.0
            } else {
                (sum / count as f64) as f32
            }
        })
        .collect();
    Ok((Matrix::from_vec_unchecked(rows, cols, merged), counts))
}

/// Ties-merging on each factor stack; `B_m` carries the `λ`.
pub fn ties_merge(sets: &[AdapterSet], cfg: &MergeConfig) -> Result<(AdapterSet, MergeReport)> {
    run_per_module(sets, cfg, Method::Ties, None, |inputs| {
        let a: Vec<&Matrix> = inputs.pairs.iter().map(|p| &p.a).collect();
        let b: Vec<&Matrix> = inputs.pairs.iter().map(|p| &p.b).collect();
        let (a_m, pruned_a) = ties_stack(&a, cfg.prune_rate)?;
        let (b_m, pruned_b) = ties_stack(&b, cfg.prune_rate)?;
        Ok((
            a_m,
            b_m.scale(cfg.lambda as f32),
            ModuleReport {
                pruned_a,
                pruned_b,
                ..Default::default()
            },
        ))
    })
}

/// Drops entries with probability `p` and rescales survivors by `1/(1-p)`.
///
/// The keep/drop decision for entry `i` is a pure function of
/// `(seed, task, tensor_key, i)`.
pub fn dare_drop(m: &Matrix, p: f64, seed: u64, task: &str, tensor_key: &str) -> (Matrix, usize) {
    let stream = rng::stream_key(&[task, tensor_key]);
    let keep = 1.0 - p;
    let mut dropped = 0;
    let data = m
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if rng::uniform(seed, stream, i as u64) < p {
                dropped += 1;
                0.0
            } else {
                dare_rescale(v, keep)
            }
        })
        .collect();
    (Matrix::from_vec_unchecked(m.rows(), m.cols(), data), dropped)
}

#[inline]
pub(crate) fn dare_rescale(v: f32, keep: f64) -> f32 {
    (v as f64 / keep) as f32
}

/// DARE on each factor, then combined as in [`task_arithmetic_merge`].
pub fn dare_merge(sets: &[AdapterSet], cfg: &MergeConfig) -> Result<(AdapterSet, MergeReport)> {
    let norm = 1.0 / sets.len().max(1) as f64;
    run_per_module(sets, cfg, Method::Dare, Some(norm), |inputs| {
        let module = &inputs.layout.name;
        let mut a = Vec::with_capacity(inputs.pairs.len());
        let mut b = Vec::with_capacity(inputs.pairs.len());
        let mut report = ModuleReport::default();
        for (&task, pair) in inputs.tasks.iter().zip(&inputs.pairs) {
            let key_a = format!("{module}{LORA_A_SUFFIX}");
            let key_b = format!("{module}{LORA_B_SUFFIX}");
            let (da, na) = dare_drop(&pair.a, cfg.drop_prob, cfg.seed, task, &key_a);
            let (db, nb) = dare_drop(&pair.b, cfg.drop_prob, cfg.seed, task, &key_b);
            report.pruned_a.push(na);
            report.pruned_b.push(nb);
            a.push(da);
            b.push(db);
        }
        let (a_m, b_m) = sum_combine(&a, &b, cfg.lambda);
        Ok((a_m, b_m, report))
    })
}
