//! Synthetic multi-task linear problems with known low-rank ground truth.
//!
//! Each task shares a base weight `W0` and has a target update `B* A*` with a
//! prescribed spectrum. Adapters are trained by full-batch gradient descent
//! and then merged, so every method can be scored against the exact target.

mod experiment;
mod scenario;
mod train;

pub use experiment::{
    prepare, run_cell, run_experiment, CellFailure, CellOutcome, ExperimentConfig, MeanRow, MergeSettings,
    Prepared,
    MethodSpec, ResultRow, ResultTable, RESULT_HEADER,
};
pub use scenario::{generate_tasks, Relation, ScenarioSpec, SpectrumProfile, SyntheticTask};
pub use train::{evaluate, train_adapter, Evaluation, TrainStats, TrainedAdapter, MODULE_NAME};
