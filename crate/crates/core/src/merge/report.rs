use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MergeConfig, Method};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    /// Pruning removed all of a non-zero row's mass.
    DeadRow,
    /// The row of `A` was zero before pruning.
    ZeroRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowIncident {
    pub task: String,
    pub row: usize,
    pub kind: IncidentKind,
}

/// Diagnostics for one merged module; per-task lists follow
/// [`MergeReport::tasks`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub pruned_a: Vec<usize>,
    pub pruned_b: Vec<usize>,
    pub scaling: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub dead_rows: Vec<RowIncident>,
    pub elapsed_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub method: Method,
    pub lambda: f64,
    pub prune_rate: f64,
    pub drop_prob: f64,
    pub seed: u64,
    pub tasks: Vec<String>,
    /// Factor applied to the summed `B` by sum-based baselines (`1/N`).
    pub norm_factor: Option<f64>,
    pub modules: BTreeMap<String, ModuleReport>,
    pub elapsed_ms: f64,
}

impl MergeReport {
    pub(crate) fn new(cfg: &MergeConfig, tasks: Vec<String>, norm_factor: Option<f64>) -> Self {
        Self {
            method: cfg.method,
            lambda: cfg.lambda,
            prune_rate: cfg.prune_rate,
            drop_prob: cfg.drop_prob,
            seed: cfg.seed,
            tasks,
            norm_factor,
            modules: BTreeMap::new(),
            elapsed_ms: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn dead_row_count(&self) -> usize {
        self.modules
            .values()
            .flat_map(|m| &m.dead_rows)
            .filter(|i| i.kind == IncidentKind::DeadRow)
            .count()
    }
}
