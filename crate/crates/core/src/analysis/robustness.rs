use std::collections::BTreeMap;

use serde::Serialize;

use super::{head_tail, DEGENERATE_SIGMA};
use crate::adapter::{AdapterSet, LoraPair};
use crate::error::{Error, Result};
use crate::tensor::{lowrank_svd, SvdTriple};

pub const CSV_HEADER: [&str; 8] = [
    "module",
    "task",
    "index",
    "sigma_task",
    "sigma_merged",
    "ratio",
    "sim_v",
    "sim_u",
];

/// Relative gap under which neighbouring singular values are flagged as
/// near-degenerate (their vectors are not individually identifiable).
const GAP_FLAG: f64 = 1e-3;

/// Comparison of the `index`-th singular triple (1-based) of a task and a
/// merged update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexComparison {
    pub index: usize,
    pub sigma_task: f64,
    pub sigma_merged: f64,
    pub ratio: Option<f64>,
    pub sim_v: Option<f64>,
    pub sim_u: Option<f64>,
    pub near_degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RobustnessSummary {
    pub head_sim_v: Option<f64>,
    pub tail_sim_v_mean: Option<f64>,
    pub head_sim_u: Option<f64>,
    pub tail_sim_u_mean: Option<f64>,
    pub head_ratio: Option<f64>,
    pub tail_ratio_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub task: String,
    pub module: String,
    pub indices: Vec<IndexComparison>,
    pub summary: RobustnessSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueRatios {
    pub ratios: Vec<Option<f64>>,
    pub head: Option<f64>,
    pub tail_mean: Option<f64>,
}

fn abs_cosine(x: &[f32], y: &[f32]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(&a, &b)| a as f64 * b as f64).sum();
    let nx: f64 = x.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    (dot.abs() / (nx * ny)).min(1.0)
}

fn near_degenerate(sigma: &[f64], i: usize) -> bool {
    let s = sigma[i];
    if s < DEGENERATE_SIGMA {
        return false;
    }
    let close = |j: usize| (sigma[j] - s).abs() <= GAP_FLAG * s.max(sigma[j]);
    (i > 0 && close(i - 1)) || (i + 1 < sigma.len() && close(i + 1))
}

fn check_dims(task: &LoraPair, merged: &LoraPair) -> Result<()> {
    if (task.d_out(), task.d_in()) != (merged.d_out(), merged.d_in()) {
        return Err(Error::Validation(format!(
            "module '{}': task update is {}x{} but merged update is {}x{}",
            task.module_name,
            task.d_out(),
            task.d_in(),
            merged.d_out(),
            merged.d_in()
        )));
    }
    Ok(())
}

fn compare(task: &SvdTriple, merged: &SvdTriple) -> Vec<IndexComparison> {
    let q = task.len().min(merged.len());
    (0..q)
        .map(|i| {
            let st = task.sigma[i];
            let sm = merged.sigma[i];
            let defined = st >= DEGENERATE_SIGMA && sm >= DEGENERATE_SIGMA;
            IndexComparison {
                index: i + 1,
                sigma_task: st,
                sigma_merged: sm,
                ratio: (st >= DEGENERATE_SIGMA).then(|| sm / st),
                sim_v: defined.then(|| abs_cosine(&task.right_vector(i), &merged.right_vector(i))),
                sim_u: defined.then(|| abs_cosine(&task.left_vector(i), &merged.left_vector(i))),
                near_degenerate: near_degenerate(&task.sigma, i) || near_degenerate(&merged.sigma, i),
            }
        })
        .collect()
}

fn summarize(indices: &[IndexComparison]) -> RobustnessSummary {
    let col = |f: fn(&IndexComparison) -> Option<f64>| -> Vec<Option<f64>> {
        indices.iter().map(f).collect()
    };
    let (head_sim_v, tail_sim_v_mean) = head_tail(&col(|c| c.sim_v));
    let (head_sim_u, tail_sim_u_mean) = head_tail(&col(|c| c.sim_u));
    let (head_ratio, tail_ratio_mean) = head_tail(&col(|c| c.ratio));
    RobustnessSummary {
        head_sim_v,
        tail_sim_v_mean,
        head_sim_u,
        tail_sim_u_mean,
        head_ratio,
        tail_ratio_mean,
    }
}

fn svd_of(pair: &LoraPair) -> Result<SvdTriple> {
    lowrank_svd(&[(&pair.b, &pair.a)])
}

/// Index-paired absolute cosines of singular vectors (plus value ratios),
/// up to the smaller of the two ranks.
pub fn direction_similarity(task_pair: &LoraPair, merged_pair: &LoraPair) -> Result<RobustnessRow> {
    check_dims(task_pair, merged_pair)?;
    let indices = compare(&svd_of(task_pair)?, &svd_of(merged_pair)?);
    let summary = summarize(&indices);
    Ok(RobustnessRow {
        task: String::new(),
        module: task_pair.module_name.clone(),
        indices,
        summary,
    })
}

/// Per-index `σ_merged / σ_task` with head and tail-mean summaries.
pub fn value_ratio(task_pair: &LoraPair, merged_pair: &LoraPair) -> Result<ValueRatios> {
    let row = direction_similarity(task_pair, merged_pair)?;
    Ok(ValueRatios {
        ratios: row.indices.iter().map(|c| c.ratio).collect(),
        head: row.summary.head_ratio,
        tail_mean: row.summary.tail_ratio_mean,
    })
}

/// Uniform mean of per-module summaries for one task.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskMean {
    pub task: String,
    pub modules: usize,
    pub summary: RobustnessSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
    pub task_means: Vec<TaskMean>,
    pub overall: RobustnessSummary,
}

fn mean_summary<'a>(items: impl Iterator<Item = &'a RobustnessSummary> + Clone) -> RobustnessSummary {
    let avg = |f: fn(&RobustnessSummary) -> Option<f64>| {
        let vals: Vec<f64> = items.clone().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    RobustnessSummary {
        head_sim_v: avg(|s| s.head_sim_v),
        tail_sim_v_mean: avg(|s| s.tail_sim_v_mean),
        head_sim_u: avg(|s| s.head_sim_u),
        tail_sim_u_mean: avg(|s| s.tail_sim_u_mean),
        head_ratio: avg(|s| s.head_ratio),
        tail_ratio_mean: avg(|s| s.tail_ratio_mean),
    }
}

impl RobustnessReport {
    pub fn from_rows(rows: Vec<RobustnessRow>) -> Self {
        let mut by_task: BTreeMap<&str, Vec<&RobustnessSummary>> = BTreeMap::new();
        for r in &rows {
            by_task.entry(&r.task).or_default().push(&r.summary);
        }
        let task_means = by_task
            .into_iter()
            .map(|(task, sums)| TaskMean {
                task: task.to_string(),
                modules: sums.len(),
                summary: mean_summary(sums.iter().copied()),
            })
            .collect();
        let overall = mean_summary(rows.iter().map(|r| &r.summary));
        Self {
            rows,
            task_means,
            overall,
        }
    }

    /// One line per (module, task, index); absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for c in &row.indices {
                w.write_record([
                    row.module.clone(),
                    row.task.clone(),
                    c.index.to_string(),
                    c.sigma_task.to_string(),
                    c.sigma_merged.to_string(),
                    opt(c.ratio),
                    opt(c.sim_v),
                    opt(c.sim_u),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares every module of every task with the merged adapter.
pub fn robustness_report(tasks: &[AdapterSet], merged: &AdapterSet) -> Result<RobustnessReport> {
    let mut jobs = Vec::new();
    for set in tasks {
        for pair in set.modules.values() {
            let Some(m) = merged.get(&pair.module_name) else {
                return Err(Error::Validation(format!(
                    "merged adapter has no module '{}' (present in task '{}')",
                    pair.module_name, set.task_name
                )));
            };
            check_dims(pair, m)?;
            jobs.push((set.task_name.as_str(), pair, m));
        }
    }
    let rows = crate::par::map(&jobs, |&(task, pair, m)| {
        direction_similarity(pair, m).map(|mut row| {
            row.task = task.to_string();
            row
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessReport::from_rows(rows))
}
