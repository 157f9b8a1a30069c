use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adapter::LoraPair;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{matmul, thin_qr, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumProfile {
    Flat,
    /// `σ_i = gamma^(i-1)`
    Geometric { gamma: f64 },
}

impl SpectrumProfile {
    pub fn values(&self, r: usize) -> Vec<f64> {
        match *self {
            SpectrumProfile::Flat => vec![1.0; r],
            SpectrumProfile::Geometric { gamma } => (0..r).map(|i| gamma.powi(i as i32)).collect(),
        }
    }
}

/// How task subspaces relate to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Same column and row spaces, different maps within them.
    Shared,
    /// Mutually orthogonal column spaces and row spaces.
    Orthogonal,
    /// First `rank/2` directions shared, the rest private per task.
    Mixed,
}

fn default_samples() -> usize {
    256
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub tasks: usize,
    pub d_out: usize,
    pub d_in: usize,
    pub rank: usize,
    pub spectrum: SpectrumProfile,
    pub relation: Relation,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default = "default_samples")]
    pub train_samples: usize,
    #[serde(default = "default_samples")]
    pub eval_samples: usize,
    /// Initialize every task's `A` from the same draw, as when adapters are
    /// trained from one base checkpoint with a fixed seed.
    #[serde(default = "default_true")]
    pub shared_init: bool,
}

impl ScenarioSpec {
    /// Dimension budget a relation needs inside `min(d_out, d_in)`.
    fn required_dims(&self) -> usize {
        let (n, r) = (self.tasks, self.rank);
        match self.relation {
            Relation::Shared => r,
            Relation::Orthogonal => n * r,
            Relation::Mixed => r / 2 + n * (r - r / 2),
        }
    }

    /// Checks the spec; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tasks", self.tasks),
            ("d_out", self.d_out),
            ("d_in", self.d_in),
            ("rank", self.rank),
            ("train_samples", self.train_samples),
            ("eval_samples", self.eval_samples),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{field}: must be positive")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning_rate: must be positive, got {}",
                self.learning_rate
            )));
        }
        if let SpectrumProfile::Geometric { gamma } = self.spectrum {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Validation(format!(
                    "spectrum.gamma: must lie in (0, 1], got {gamma}"
                )));
            }
        }
        let budget = self.d_out.min(self.d_in);
        let need = self.required_dims();
        if need > budget {
            return Err(Error::Validation(format!(
                "rank: {:?} relation with tasks={} rank={} needs {need} dimensions but min(d_out, d_in) = {budget}",
                self.relation, self.tasks, self.rank
            )));
        }
        Ok(())
    }
}

/// One synthetic task.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub task_id: String,
    pub w0: Matrix,
    /// Ground-truth update `B* A*` with `B* = U diag(σ)`, `A* = Vᵀ`.
    pub target: LoraPair,
    pub target_sigma: Vec<f64>,
    pub train_inputs: Matrix,
    pub train_labels: Matrix,
    pub eval_inputs: Matrix,
    pub eval_labels: Matrix,
}

impl SyntheticTask {
    pub fn target_delta(&self) -> Matrix {
        self.target.compose()
    }
}

pub(crate) fn rng_for(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        (z * scale) as f32
    })
}

fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Matrix> {
    Ok(thin_qr(&gaussian(rng, rows, cols, 1.0))?.0)
}

fn columns(m: &Matrix, range: std::ops::Range<usize>) -> Matrix {
    let width = range.len();
    Matrix::from_fn(m.rows(), width, |i, j| m.get(i, range.start + j))
}

/// Per-task orthonormal bases (`dim x r`) following `relation`.
fn bases(spec: &ScenarioSpec, rng: &mut ChaCha8Rng, dim: usize) -> Result<Vec<Matrix>> {
    let (n, r) = (spec.tasks, spec.rank);
    match spec.relation {
        Relation::Orthogonal => {
            let q = orthonormal(rng, dim, n * r)?;
            Ok((0..n).map(|t| columns(&q, t * r..(t + 1) * r)).collect())
        }
        Relation::Shared => {
            let q = orthonormal(rng, dim, r)?;
            (0..n)
                .map(|_| {
                    let rot = orthonormal(rng, r, r)?;
                    matmul(&q, &rot)
                })
                .collect()
        }
        Relation::Mixed => {
            let shared = r / 2;
            let private = r - shared;
            let q = orthonormal(rng, dim, shared + n * private)?;
            Ok((0..n)
                .map(|t| {
                    let s = columns(&q, 0..shared.max(1));
                    let p = columns(&q, shared + t * private..shared + (t + 1) * private);
                    if shared == 0 {
                        p
                    } else {
                        Matrix::hstack(&[&s, &p]).expect("same row count")
                    }
                })
                .collect())
        }
    }
}

/// Builds the scenario's tasks. Deterministic in `(spec, seed)`; train and
/// eval inputs come from separate random streams.
pub fn generate_tasks(spec: &ScenarioSpec, seed: u64) -> Result<Vec<SyntheticTask>> {
    spec.validate()?;
    let mut rng = rng_for(seed, &["scenario", &spec.name]);
    let w0 = gaussian(&mut rng, spec.d_out, spec.d_in, 1.0 / (spec.d_in as f64).sqrt());
    let u = bases(spec, &mut rng, spec.d_out)?;
    let v = bases(spec, &mut rng, spec.d_in)?;
    let sigma = spec.spectrum.values(spec.rank);

    let mut tasks = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let task_id = format!("task{t}");
        let b = u[t].scale_columns(&sigma)?;
        let a = v[t].transpose();
        let target = LoraPair::new(crate::synth::MODULE_NAME, a, b)?;
        let full = w0.add(&target.compose())?;
        let mut train_rng = rng_for(seed, &["train", &spec.name, &task_id]);
        let mut eval_rng = rng_for(seed, &["eval", &spec.name, &task_id]);
        let train_inputs = gaussian(&mut train_rng, spec.d_in, spec.train_samples, 1.0);
        let eval_inputs = gaussian(&mut eval_rng, spec.d_in, spec.eval_samples, 1.0);
        tasks.push(SyntheticTask {
            task_id,
            train_labels: matmul(&full, &train_inputs)?,
            eval_labels: matmul(&full, &eval_inputs)?,
            w0: w0.clone(),
            target,
            target_sigma: sigma.clone(),
            train_inputs,
            eval_inputs,
        });
    }
    Ok(tasks)
}
