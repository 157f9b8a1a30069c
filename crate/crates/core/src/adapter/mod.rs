//! LoRA adapter data model, checkpoint I/O and cross-task validation.

mod container;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use container::{load_adapter, load_adapter_with_diagnostics, save_adapter, LoadDiagnostics};

pub const LORA_A_SUFFIX: &str = ".lora_A.weight";
pub const LORA_B_SUFFIX: &str = ".lora_B.weight";
pub const META_ALPHA: &str = "lora_alpha";
pub const META_TASK: &str = "task_name";

/// One module's low-rank update `ΔW = B · A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraPair {
    pub module_name: String,
    /// `r x d_in`
    pub a: Matrix,
    /// `d_out x r`
    pub b: Matrix,
    pub alpha: Option<f32>,
}

impl LoraPair {
    pub fn new(module_name: impl Into<String>, a: Matrix, b: Matrix) -> Result<Self> {
        let module_name = module_name.into();
        if a.rows() != b.cols() {
            return Err(Error::Validation(format!(
                "module '{module_name}': rank mismatch, lora_A has {} rows but lora_B has {} columns",
                a.rows(),
                b.cols()
            )));
        }
        let rank = a.rows();
        if rank > a.cols().min(b.rows()) {
            return Err(Error::Validation(format!(
                "module '{module_name}': rank {rank} exceeds min(d_in={}, d_out={})",
                a.cols(),
                b.rows()
            )));
        }
        Ok(Self {
            module_name,
            a,
            b,
            alpha: None,
        })
    }

    pub fn with_alpha(mut self, alpha: f32) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a.cols()
    }

    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    /// Materialized `B · A`.
    pub fn compose(&self) -> Matrix {
        crate::tensor::matmul(&self.b, &self.a).expect("pair shapes validated at construction")
    }
}

/// One task's checkpoint: module name to pair, iterated in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterSet {
    pub task_name: String,
    pub modules: BTreeMap<String, LoraPair>,
    pub metadata: BTreeMap<String, String>,
}

impl AdapterSet {
    pub fn new(task_name: impl Into<String>) -> Self {
        Self {
            task_name: task_name.into(),
            modules: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Inserts a pair under its own module name, rejecting duplicates.
    pub fn insert(&mut self, pair: LoraPair) -> Result<()> {
        if self.modules.contains_key(&pair.module_name) {
            return Err(Error::Validation(format!(
                "task '{}': duplicate module '{}'",
                self.task_name, pair.module_name
            )));
        }
        self.modules.insert(pair.module_name.clone(), pair);
        Ok(())
    }

    pub fn with_pair(mut self, pair: LoraPair) -> Result<Self> {
        self.insert(pair)?;
        Ok(self)
    }

    pub fn get(&self, module: &str) -> Option<&LoraPair> {
        self.modules.get(module)
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn module_names(&self) -> impl Iterator<Item = &str> {
        self.modules.keys().map(String::as_str)
    }

    /// The common alpha of all pairs, or an error if they disagree.
    pub fn alpha(&self) -> Result<Option<f32>> {
        let mut found: Option<(f32, &str)> = None;
        for pair in self.modules.values() {
            if let Some(a) = pair.alpha {
                match found {
                    Some((prev, name)) if prev.to_bits() != a.to_bits() => {
                        return Err(Error::Validation(format!(
                            "task '{}': lora_alpha {prev} on module '{name}' conflicts with {a} on '{}'",
                            self.task_name, pair.module_name
                        )))
                    }
                    None => found = Some((a, &pair.module_name)),
                    _ => {}
                }
            }
        }
        Ok(found.map(|(a, _)| a))
    }
}

/// Shape of one module shared by every task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleLayout {
    pub name: String,
    pub d_out: usize,
    pub d_in: usize,
    pub rank: usize,
}

/// Result of checking that a group of adapters can be merged.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityLayout {
    pub modules: Vec<ModuleLayout>,
    /// Task names in canonical (sorted) order.
    pub tasks: Vec<String>,
    pub alpha: Option<f32>,
}

impl CompatibilityLayout {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }
}

/// Checks that every task carries the same modules with identical shapes,
/// ranks and alpha.
///
/// In strict mode a module missing from any task is an error; otherwise the
/// layout covers the intersection of module names.
pub fn validate_compatibility(sets: &[AdapterSet], strict: bool) -> Result<CompatibilityLayout> {
    if sets.is_empty() {
        return Err(Error::Validation("at least one adapter is required".into()));
    }
    let mut ordered: Vec<&AdapterSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.task_name.cmp(&b.task_name));
    for w in ordered.windows(2) {
        if w[0].task_name == w[1].task_name {
            return Err(Error::Validation(format!(
                "duplicate task name '{}'",
                w[0].task_name
            )));
        }
    }
    for set in &ordered {
        if set.is_empty() {
            return Err(Error::Validation(format!(
                "task '{}' has no LoRA modules",
                set.task_name
            )));
        }
    }

    let union: BTreeSet<&str> = ordered.iter().flat_map(|s| s.module_names()).collect();
    let mut common = Vec::new();
    for &name in &union {
        let missing = ordered.iter().find(|s| s.get(name).is_none());
        match missing {
            Some(set) if strict => {
                return Err(Error::Validation(format!(
                    "task '{}' is missing module '{name}'",
                    set.task_name
                )))
            }
            Some(set) => log::warn!(
                "module '{name}' skipped: absent from task '{}'",
                set.task_name
            ),
            None => common.push(name),
        }
    }
    if common.is_empty() {
        return Err(Error::Validation("tasks share no modules".into()));
    }

    let reference = ordered[0];
    let mut modules = Vec::with_capacity(common.len());
    for name in common {
        let first = &reference.modules[name];
        let layout = ModuleLayout {
            name: name.to_string(),
            d_out: first.d_out(),
            d_in: first.d_in(),
            rank: first.rank(),
        };
        for set in &ordered[1..] {
            let pair = &set.modules[name];
            if pair.rank() != layout.rank {
                return Err(Error::Validation(format!(
                    "task '{}' module '{name}': rank {} differs from rank {} in task '{}'",
                    set.task_name,
                    pair.rank(),
                    layout.rank,
                    reference.task_name
                )));
            }
            if (pair.d_out(), pair.d_in()) != (layout.d_out, layout.d_in) {
                return Err(Error::Validation(format!(
                    "task '{}' module '{name}': shape {}x{} differs from {}x{} in task '{}'",
                    set.task_name,
                    pair.d_out(),
                    pair.d_in(),
                    layout.d_out,
                    layout.d_in,
                    reference.task_name
                )));
            }
        }
        modules.push(layout);
    }

    let mut alpha: Option<(f32, &str)> = None;
    for set in &ordered {
        if let Some(a) = set.alpha()? {
            match alpha {
                Some((prev, task)) if prev.to_bits() != a.to_bits() => {
                    return Err(Error::Validation(format!(
                        "metadata conflict: lora_alpha {a} in task '{}' differs from {prev} in task '{task}'",
                        set.task_name
                    )))
                }
                None => alpha = Some((a, &set.task_name)),
                _ => {}
            }
        }
    }

    Ok(CompatibilityLayout {
        modules,
        tasks: ordered.iter().map(|s| s.task_name.clone()).collect(),
        alpha: alpha.map(|(a, _)| a),
    })
}
