use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scenario::{generate_tasks, ScenarioSpec, SyntheticTask};
use super::train::{evaluate, train_adapter, TrainStats, MODULE_NAME};
use crate::adapter::{AdapterSet, LoraPair};
use crate::error::{Error, Result};
use crate::merge::{
    merge, DeadRowPolicy, MergeConfig, Method, DEFAULT_DROP_PROB, DEFAULT_LAMBDA,
    DEFAULT_ROBUST_PRUNE_RATE, DEFAULT_TIES_PRUNE_RATE,
};
use crate::rng::derive_seed;

pub const RESULT_HEADER: &str = "scenario,seed,method,task,rel_err,mse";

/// A row source in the result table: each task's own adapter, or a merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodSpec {
    Individual,
    Merge(Method),
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 5] = [
        MethodSpec::Individual,
        MethodSpec::Merge(Method::Robust),
        MethodSpec::Merge(Method::TaskArithmetic),
        MethodSpec::Merge(Method::Ties),
        MethodSpec::Merge(Method::Dare),
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodSpec::Individual => "individual",
            MethodSpec::Merge(m) => m.name(),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "individual" {
            return Ok(MethodSpec::Individual);
        }
        s.parse::<Method>().map(MethodSpec::Merge)
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.name().to_string()
    }
}

/// Merge hyperparameters applied to every scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeSettings {
    pub lambda: f64,
    pub robust_prune_rate: f64,
    pub ties_prune_rate: f64,
    pub drop_prob: f64,
    pub dead_row_policy: DeadRowPolicy,
}

impl Default for MergeSettings {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            robust_prune_rate: DEFAULT_ROBUST_PRUNE_RATE,
            ties_prune_rate: DEFAULT_TIES_PRUNE_RATE,
            drop_prob: DEFAULT_DROP_PROB,
            dead_row_policy: DeadRowPolicy::UnitScale,
        }
    }
}

impl MergeSettings {
    pub fn config(&self, method: Method, seed: u64) -> MergeConfig {
        let cfg = match method {
            Method::Robust => MergeConfig::robust(self.robust_prune_rate, self.lambda),
            Method::TaskArithmetic => MergeConfig::task_arithmetic(self.lambda),
            Method::Ties => MergeConfig::ties(self.ties_prune_rate, self.lambda),
            Method::Dare => MergeConfig::dare(self.drop_prob, self.lambda, seed),
        };
        cfg.with_policy(self.dead_row_policy)
    }
}

fn default_methods() -> Vec<MethodSpec> {
    MethodSpec::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub merge: MergeSettings,
}

impl ExperimentConfig {
    /// Checks every scenario and the merge settings; errors carry the field path.
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Validation("scenarios: at least one scenario is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Validation("methods: at least one method is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds: at least one seed is required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, spec) in self.scenarios.iter().enumerate() {
            spec.validate().map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("scenarios[{i}].{m}")),
                other => other,
            })?;
            if !names.insert(spec.name.as_str()) {
                return Err(Error::Validation(format!(
                    "scenarios[{i}].name: duplicate scenario name '{}'",
                    spec.name
                )));
            }
        }
        for m in Method::ALL {
            self.merge.config(m, 0).validate().map_err(|e| match e {
                Error::Parameter(msg) => Error::Validation(format!("merge: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// Tasks of one `(scenario, seed)` with their trained adapters.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: String,
    pub seed: u64,
    pub tasks: Vec<SyntheticTask>,
    pub adapters: Vec<AdapterSet>,
    pub train: Vec<TrainStats>,
}

/// Generates and trains every task of a scenario for one seed.
pub fn prepare(spec: &ScenarioSpec, seed: u64) -> Result<Prepared> {
    let tasks = generate_tasks(spec, seed)?;
    let trained = crate::par::map(&tasks, |task| {
        let init_seed = if spec.shared_init {
            derive_seed(seed, &["init", &spec.name])
        } else {
            derive_seed(seed, &["init", &spec.name, &task.task_id])
        };
        train_adapter(task, spec.rank, spec.steps, spec.learning_rate, init_seed)
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("task '{}': {m}", task.task_id)),
                other => other,
            })
    });
    let mut adapters = Vec::with_capacity(tasks.len());
    let mut train = Vec::with_capacity(tasks.len());
    for (task, t) in tasks.iter().zip(trained) {
        let t = t?;
        adapters.push(AdapterSet::new(task.task_id.clone()).with_pair(t.pair)?);
        train.push(t.stats);
    }
    Ok(Prepared {
        scenario: spec.name.clone(),
        seed,
        tasks,
        adapters,
        train,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub method: MethodSpec,
    pub task: String,
    pub rel_err: f64,
    pub mse: f64,
}

/// Mean over seeds and tasks for one `(scenario, method)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanRow {
    pub scenario: String,
    pub method: MethodSpec,
    pub rel_err: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellOutcome {
    pub scenario: String,
    pub seed: u64,
    pub method: MethodSpec,
    pub rows: Vec<ResultRow>,
    pub dead_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFailure {
    pub scenario: String,
    pub seed: u64,
    /// `None` when task generation or training failed for the whole seed.
    pub method: Option<MethodSpec>,
    pub message: String,
}

fn merged_pair(set: &AdapterSet) -> Result<&LoraPair> {
    set.get(MODULE_NAME)
        .ok_or_else(|| Error::Validation(format!("merged adapter lacks module '{MODULE_NAME}'")))
}

/// Evaluates one method on a prepared `(scenario, seed)`.
pub fn run_cell(prepared: &Prepared, method: MethodSpec, settings: &MergeSettings) -> Result<CellOutcome> {
    let row = |task: &SyntheticTask, pair: &LoraPair| -> Result<ResultRow> {
        let ev = evaluate(&task.w0, pair, task)?;
        Ok(ResultRow {
            scenario: prepared.scenario.clone(),
            seed: prepared.seed,
            method,
            task: task.task_id.clone(),
            rel_err: ev.rel_err,
            mse: ev.mse,
        })
    };
    let mut dead_rows = 0;
    let rows = match method {
        MethodSpec::Individual => prepared
            .tasks
            .iter()
            .zip(&prepared.adapters)
            .map(|(task, set)| row(task, merged_pair(set)?))
            .collect::<Result<Vec<_>>>()?,
        MethodSpec::Merge(m) => {
            let cfg = settings.config(m, prepared.seed);
            let (merged, report) = merge(&prepared.adapters, &cfg)?;
            dead_rows = report.dead_row_count();
            let pair = merged_pair(&merged)?;
            prepared
                .tasks
                .iter()
                .map(|task| row(task, pair))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(CellOutcome {
        scenario: prepared.scenario.clone(),
        seed: prepared.seed,
        method,
        rows,
        dead_rows,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ResultTable {
    /// Canonical order: scenario (config order), seed, method, task.
    pub rows: Vec<ResultRow>,
    pub means: Vec<MeanRow>,
    pub failures: Vec<CellFailure>,
    /// Recovery of each trained adapter, keyed by `(scenario, seed, task)`.
    pub training: Vec<(String, u64, String, TrainStats)>,
    pub dead_rows: BTreeMap<String, usize>,
    pub scenario_ms: BTreeMap<String, f64>,
}

impl ResultTable {
    /// Result rows followed by mean rows (`seed` = `all`, `task` = `mean`).
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(RESULT_HEADER.split(',')).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.seed.to_string(),
                r.method.to_string(),
                r.task.clone(),
                format!("{:.9e}", r.rel_err),
                format!("{:.9e}", r.mse),
            ])
            .expect("in-memory write");
        }
        for m in &self.means {
            w.write_record([
                m.scenario.clone(),
                "all".into(),
                m.method.to_string(),
                "mean".into(),
                format!("{:.9e}", m.rel_err),
                format!("{:.9e}", m.mse),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn mean(&self, scenario: &str, method: MethodSpec) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.scenario == scenario && m.method == method)
    }

    /// Methods of a scenario ordered by mean relative error, best first.
    pub fn ranking(&self, scenario: &str) -> Vec<&MeanRow> {
        let mut v: Vec<&MeanRow> = self.means.iter().filter(|m| m.scenario == scenario).collect();
        v.sort_by(|a, b| a.rel_err.total_cmp(&b.rel_err).then(a.method.cmp(&b.method)));
        v
    }
}

fn compute_means(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<MeanRow> {
    let mut means = Vec::new();
    for spec in &cfg.scenarios {
        for &method in &cfg.methods {
            let (mut err, mut mse, mut count) = (0.0, 0.0, 0usize);
            for r in rows.iter().filter(|r| r.scenario == spec.name && r.method == method) {
                err += r.rel_err;
                mse += r.mse;
                count += 1;
            }
            if count > 0 {
                means.push(MeanRow {
                    scenario: spec.name.clone(),
                    method,
                    rel_err: err / count as f64,
                    mse: mse / count as f64,
                    count,
                });
            }
        }
    }
    means
}

/// Runs the full `scenarios × seeds × methods` product.
///
/// Failed cells are collected in `failures` and the rest of the run goes on.
/// Only an invalid configuration is an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let mut table = ResultTable::default();
    for spec in &cfg.scenarios {
        let start = Instant::now();
        let prepared = crate::par::map(&cfg.seeds, |&seed| prepare(spec, seed));
        let mut ready = Vec::new();
        for (&seed, p) in cfg.seeds.iter().zip(prepared) {
            match p {
                Ok(p) => ready.push(p),
                Err(e) => {
                    log::warn!("scenario '{}' seed {seed}: {e}", spec.name);
                    table.failures.push(CellFailure {
                        scenario: spec.name.clone(),
                        seed,
                        method: None,
                        message: e.to_string(),
                    });
                }
            }
        }
        for p in &ready {
            for ((task, _), stats) in p.tasks.iter().zip(&p.adapters).zip(&p.train) {
                table
                    .training
                    .push((p.scenario.clone(), p.seed, task.task_id.clone(), stats.clone()));
            }
        }
        let cells: Vec<(&Prepared, MethodSpec)> = ready
            .iter()
            .flat_map(|p| cfg.methods.iter().map(move |&m| (p, m)))
            .collect();
        let outcomes = crate::par::map(&cells, |&(p, m)| run_cell(p, m, &cfg.merge));
        for (&(p, m), outcome) in cells.iter().zip(outcomes) {
            match outcome {
                Ok(o) => {
                    if o.dead_rows > 0 {
                        *table.dead_rows.entry(format!("{}/{}/{}", o.scenario, o.seed, m)).or_default() +=
                            o.dead_rows;
                    }
                    table.rows.extend(o.rows);
                }
                Err(e) => {
                    log::warn!("scenario '{}' seed {} method {m}: {e}", p.scenario, p.seed);
                    table.failures.push(CellFailure {
                        scenario: p.scenario.clone(),
                        seed: p.seed,
                        method: Some(m),
                        message: e.to_string(),
                    });
                }
            }
        }
        table
            .scenario_ms
            .insert(spec.name.clone(), start.elapsed().as_secs_f64() * 1e3);
    }
    table.means = compute_means(cfg, &table.rows);
    Ok(table)
}
