//! Adapter merging: complementary-scaling merge and baselines.
//!
//! Every method works module by module over `N` tasks, keeps the merged
//! update factored as `B_m · A_m` with the input rank, and visits tasks in
//! sorted task-name order so the result does not depend on input order.

mod baselines;
mod config;
mod report;
mod robust;

use std::time::Instant;

use crate::adapter::{validate_compatibility, AdapterSet, CompatibilityLayout, LoraPair, ModuleLayout};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use baselines::{dare_drop, dare_merge, task_arithmetic_merge, ties_merge};
pub use config::{
    DeadRowPolicy, MergeConfig, Method, DEFAULT_DROP_PROB, DEFAULT_LAMBDA, DEFAULT_ROBUST_PRUNE_RATE,
    DEFAULT_TIES_PRUNE_RATE,
};
pub use report::{IncidentKind, MergeReport, ModuleReport, RowIncident};
pub use robust::{
    complementary_scaling, cross_task_normalize, prune_and_scale, robust_merge, ScalingOutcome,
    ScalingVector,
};

pub const MERGED_TASK_NAME: &str = "merged";

/// Materialized `ΔW = B · A` of one pair.
pub fn compose_delta(pair: &LoraPair) -> Matrix {
    pair.compose()
}

/// Runs the method selected in `cfg`.
pub fn merge(sets: &[AdapterSet], cfg: &MergeConfig) -> Result<(AdapterSet, MergeReport)> {
    match cfg.method {
        Method::Robust => robust_merge(sets, cfg),
        Method::TaskArithmetic => task_arithmetic_merge(sets, cfg),
        Method::Ties => ties_merge(sets, cfg),
        Method::Dare => dare_merge(sets, cfg),
    }
}

/// Tasks' pairs for one module, in canonical task order.
pub(crate) struct ModuleInputs<'a> {
    pub layout: &'a ModuleLayout,
    pub tasks: Vec<&'a str>,
    pub pairs: Vec<&'a LoraPair>,
}

/// Shared driver: validates, fans modules out, assembles the merged set and
/// report in canonical module order.
pub(crate) fn run_per_module<F>(
    sets: &[AdapterSet],
    cfg: &MergeConfig,
    expected: Method,
    norm_factor: Option<f64>,
    merge_module: F,
) -> Result<(AdapterSet, MergeReport)>
where
    F: Fn(&ModuleInputs<'_>) -> Result<(Matrix, Matrix, ModuleReport)> + Sync + Send,
{
    if cfg.method != expected {
        return Err(Error::Parameter(format!(
            "{} merge called with method {}",
            expected.name(),
            cfg.method.name()
        )));
    }
    cfg.validate()?;
    let start = Instant::now();
    let layout: CompatibilityLayout = validate_compatibility(sets, cfg.strict)?;
    let by_name = |name: &str| sets.iter().find(|s| s.task_name == name).expect("task in layout");
    let ordered: Vec<&AdapterSet> = layout.tasks.iter().map(|t| by_name(t)).collect();

    let results = crate::par::map(&layout.modules, |module| {
        let inputs = ModuleInputs {
            layout: module,
            tasks: ordered.iter().map(|s| s.task_name.as_str()).collect(),
            pairs: ordered.iter().map(|s| &s.modules[&module.name]).collect(),
        };
        let t0 = Instant::now();
        let (a, b, mut report) = merge_module(&inputs)?;
        report.elapsed_us = t0.elapsed().as_micros() as u64;
        Ok::<_, Error>((a, b, report))
    });

    let mut merged = AdapterSet::new(MERGED_TASK_NAME);
    merged
        .metadata
        .insert("merge_method".into(), cfg.method.name().into());
    merged
        .metadata
        .insert("merge_tasks".into(), layout.tasks.join(","));
    let mut report = MergeReport::new(cfg, layout.tasks.clone(), norm_factor);
    for (module, result) in layout.modules.iter().zip(results) {
        let (a, b, module_report) = result?;
        let mut pair = LoraPair::new(module.name.clone(), a, b)?;
        pair.alpha = layout.alpha;
        merged.insert(pair)?;
        report.modules.insert(module.name.clone(), module_report);
    }
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((merged, report))
}

/// Entry-wise `Σ_n m_n`, accumulated in `f64` in task order, times `factor`.
pub(crate) fn weighted_sum(parts: &[Matrix], factor: f64) -> Matrix {
    let (rows, cols) = parts[0].shape();
    let mut acc = vec![0.0f64; rows * cols];
    for m in parts {
        for (a, &v) in acc.iter_mut().zip(m.as_slice()) {
            *a += v as f64;
        }
    }
    Matrix::from_vec_unchecked(rows, cols, acc.into_iter().map(|v| (v * factor) as f32).collect())
}

pub(crate) fn context(task: &str, module: &str, err: Error) -> Error {
    let tag = format!("task '{task}' module '{module}'");
    match err {
        Error::Numeric(m) => Error::Numeric(format!("{tag}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{tag}: {m}")),
        Error::Parameter(m) => Error::Parameter(format!("{tag}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{tag}: {m}")),
        other => other,
    }
}
