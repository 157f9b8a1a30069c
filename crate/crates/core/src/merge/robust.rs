//! Magnitude pruning, complementary scaling and cross-task normalization.

use serde::{Deserialize, Serialize};

use super::{context, run_per_module, DeadRowPolicy, IncidentKind, MergeConfig, Method, ModuleReport, RowIncident};
use crate::adapter::{AdapterSet, LoraPair};
use crate::error::{Error, Result};
use crate::tensor::{apply_mask, magnitude_mask, row_l1, Mask, Matrix};

/// Diagonal of a per-rank scaling matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalingVector {
    pub entries: Vec<f64>,
}

impl ScalingVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl From<Vec<f64>> for ScalingVector {
    fn from(entries: Vec<f64>) -> Self {
        Self { entries }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingOutcome {
    pub vector: ScalingVector,
    /// Rows whose entry was set to 1 by convention rather than computed.
    pub incidents: Vec<(usize, IncidentKind)>,
}

/// Per-row ratio of the original `L1` mass of `A` to its mass after masking.
///
/// An all-zero row gets 1. A row that was non-zero but lost everything is an
/// error under [`DeadRowPolicy::Error`] and gets 1 under `UnitScale`.
pub fn complementary_scaling(a: &Matrix, mask: &Mask, policy: DeadRowPolicy) -> Result<ScalingOutcome> {
    let pruned = apply_mask(a, mask)?;
    let before = row_l1(a);
    let after = row_l1(&pruned);
    let mut entries = Vec::with_capacity(before.len());
    let mut incidents = Vec::new();
    for (i, (&num, &den)) in before.iter().zip(&after).enumerate() {
        if num == 0.0 {
            log::debug!("row {i} of lora_A is all zeros; scaling set to 1");
            incidents.push((i, IncidentKind::ZeroRow));
            entries.push(1.0);
        } else if den == 0.0 {
            match policy {
                DeadRowPolicy::Error => {
                    return Err(Error::Numeric(format!(
                        "row {i} of lora_A was fully pruned (row mass {num:.6e} -> 0); \
                         lower the prune rate or use dead_row_policy=unit_scale"
                    )))
                }
                DeadRowPolicy::UnitScale => {
                    log::warn!("row {i} of lora_A fully pruned; scaling set to 1");
                    incidents.push((i, IncidentKind::DeadRow));
                    entries.push(1.0);
                }
            }
        } else {
            entries.push(num / den);
        }
    }
    Ok(ScalingOutcome {
        vector: entries.into(),
        incidents,
    })
}

/// Divides every task's entry by the sum of that entry over tasks.
pub fn cross_task_normalize(vectors: &[ScalingVector]) -> Result<Vec<ScalingVector>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Shape("cross-task normalization needs at least one task".into()))?;
    let r = first.len();
    if let Some((n, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != r) {
        return Err(Error::Shape(format!(
            "scaling vector of task {n} has length {}, expected {r}",
            v.len()
        )));
    }
    let sums: Vec<f64> = (0..r)
        .map(|i| vectors.iter().map(|v| v.entries[i]).sum())
        .collect();
    if let Some(i) = sums.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::Numeric(format!(
            "scaling entries at index {i} sum to {}, cannot normalize",
            sums[i]
        )));
    }
    Ok(vectors
        .iter()
        .map(|v| {
            v.entries
                .iter()
                .zip(&sums)
                .map(|(&e, &s)| e / s)
                .collect::<Vec<_>>()
                .into()
        })
        .collect())
}

/// Prunes both factors and scales `B`'s columns by the complementary
/// scaling of `A`, without cross-task normalization.
///
/// This is the single-adapter transform whose effect on the spectrum the
/// analysis tools inspect.
pub fn prune_and_scale(set: &AdapterSet, prune_rate: f64, policy: DeadRowPolicy) -> Result<AdapterSet> {
    crate::tensor::check_rate("prune rate", prune_rate)?;
    let mut out = AdapterSet::new(set.task_name.clone());
    out.metadata = set.metadata.clone();
    for pair in set.modules.values() {
        let wrap = |e| context(&set.task_name, &pair.module_name, e);
        let mask_a = magnitude_mask(&pair.a, prune_rate)?;
        let mask_b = magnitude_mask(&pair.b, prune_rate)?;
        let scaling = complementary_scaling(&pair.a, &mask_a, policy).map_err(wrap)?;
        let a = apply_mask(&pair.a, &mask_a)?;
        let b = apply_mask(&pair.b, &mask_b)?.scale_columns(&scaling.vector.entries)?;
        let mut p = LoraPair::new(pair.module_name.clone(), a, b)?;
        p.alpha = pair.alpha;
        out.insert(p)?;
    }
    Ok(out)
}

/// Complementary-scaling merge.
///
/// Per module and task: prune `A` and `B` by magnitude at rate `k`, compute
/// the row-mass scaling of `A`, normalize scalings across tasks, then set
/// `A_m = Σ_n Ã_n` and `B_m = λ · Σ_n B̃_n · diag(S̃_n)`, so that
/// `B_m · A_m = λ (Σ_n B̃_n S̃_n)(Σ_n Ã_n)`.
pub fn robust_merge(sets: &[AdapterSet], cfg: &MergeConfig) -> Result<(AdapterSet, super::MergeReport)> {
    let k = cfg.prune_rate;
    let lambda = cfg.lambda;
    let policy = cfg.dead_row_policy;
    run_per_module(sets, cfg, Method::Robust, None, |inputs| {
        let name = &inputs.layout.name;
        let mut report = ModuleReport::default();
        let mut pruned_a = Vec::with_capacity(inputs.pairs.len());
        let mut pruned_b = Vec::with_capacity(inputs.pairs.len());
        let mut scalings = Vec::with_capacity(inputs.pairs.len());
        for (&task, pair) in inputs.tasks.iter().zip(&inputs.pairs) {
            let mask_a = magnitude_mask(&pair.a, k)?;
            let mask_b = magnitude_mask(&pair.b, k)?;
            let outcome = complementary_scaling(&pair.a, &mask_a, policy)
                .map_err(|e| context(task, name, e))?;
            report.pruned_a.push(mask_a.pruned());
            report.pruned_b.push(mask_b.pruned());
            for (row, kind) in outcome.incidents {
                report.dead_rows.push(RowIncident {
                    task: task.to_string(),
                    row,
                    kind,
                });
            }
            pruned_a.push(apply_mask(&pair.a, &mask_a)?);
            pruned_b.push(apply_mask(&pair.b, &mask_b)?);
            scalings.push(outcome.vector);
        }
        let normalized = cross_task_normalize(&scalings)?;

        let a_m = super::weighted_sum(&pruned_a, 1.0);
        let (d_out, r) = pruned_b[0].shape();
        let mut acc = vec![0.0f64; d_out * r];
        for (b, s) in pruned_b.iter().zip(&normalized) {
            for (row_acc, row) in acc.chunks_mut(r).zip(b.as_slice().chunks(r)) {
                for ((a, &v), &f) in row_acc.iter_mut().zip(row).zip(&s.entries) {
                    *a += v as f64 * f;
                }
            }
        }
        let b_m = Matrix::from_vec_unchecked(
            d_out,
            r,
            acc.into_iter().map(|v| (lambda * v) as f32).collect(),
        );

        report.scaling = scalings.into_iter().map(|s| s.entries).collect();
        report.normalized = normalized.into_iter().map(|s| s.entries).collect();
        Ok((a_m, b_m, report))
    })
}
