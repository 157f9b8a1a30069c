//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::adapter::{load_adapter, save_adapter, AdapterSet};
use crate::analysis::{robustness_report, spectrum_report};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::merge::{merge, prune_and_scale, DeadRowPolicy, MergeConfig, Method};
use crate::synth::{run_experiment, ExperimentConfig, MethodSpec};

const DEFAULT_SYNTH_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Parser, Debug)]
#[command(name = "lora-merge", version, about = "Merge LoRA adapters and inspect their spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge adapters into one adapter of the same rank.
    Merge(MergeArgs),
    /// Per-module singular values of an adapter.
    Spectrum(SpectrumArgs),
    /// Compare task adapters' singular triples with a merged adapter.
    #[command(alias = "analyze")]
    Robustness(RobustnessArgs),
    /// Run the synthetic multi-task benchmark.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Robust,
    #[value(name = "task_arithmetic", alias = "ta")]
    TaskArithmetic,
    Ties,
    Dare,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Robust => Method::Robust,
            MethodArg::TaskArithmetic => Method::TaskArithmetic,
            MethodArg::Ties => Method::Ties,
            MethodArg::Dare => Method::Dare,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Error,
    #[value(name = "unit_scale")]
    UnitScale,
}

#[derive(Args, Debug)]
struct MergeArgs {
    /// Adapter files, one per task.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "robust")]
    method: MethodArg,
    /// Fraction of entries pruned by magnitude (robust: 0.9, ties: 0.8).
    #[arg(long)]
    prune_rate: Option<f64>,
    #[arg(long, default_value_t = crate::merge::DEFAULT_LAMBDA)]
    lambda: f64,
    /// DARE drop probability (default 0.5).
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Write the merge report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    dead_row_policy: PolicyArg,
    /// Merge the modules common to all inputs instead of rejecting mismatches.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    path: PathBuf,
    /// Exact module name or name prefix.
    #[arg(long)]
    module: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Report the spectrum after pruning at this rate and rescaling.
    #[arg(long)]
    prune_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct RobustnessArgs {
    /// Comma-separated task adapter files.
    #[arg(long, required = true, value_delimiter = ',')]
    tasks: Vec<PathBuf>,
    #[arg(long)]
    merged: PathBuf,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    /// JSON output (default: the CSV path with a .json extension).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Experiment config (JSON). The bundled default is used if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Ok(v) = std::env::var("MERGE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                crate::par::init_global_threads(n);
            }
            _ => {
                eprintln!("error: MERGE_THREADS must be a positive integer, got '{v}'");
                return 2;
            }
        }
    }
    let result = match cli.command {
        Command::Merge(a) => cmd_merge(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_config(value: serde_json::Value) {
    eprintln!("config: {value}");
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<AdapterSet>> {
    paths.iter().map(load_adapter).collect()
}

fn merge_config(a: &MergeArgs) -> Result<MergeConfig> {
    let method = Method::from(a.method);
    let mut cfg = MergeConfig::default_for(method);
    cfg.lambda = a.lambda;
    if let Some(k) = a.prune_rate {
        cfg.prune_rate = k;
    }
    if let Some(p) = a.drop_prob {
        cfg.drop_prob = p;
    }
    if let Some(seed) = a.seed {
        if method != Method::Dare {
            return Err(Error::Parameter(format!("--seed only applies to dare, not {method}")));
        }
        cfg.seed = seed;
    }
    cfg.dead_row_policy = match a.dead_row_policy {
        PolicyArg::Error => DeadRowPolicy::Error,
        PolicyArg::UnitScale => DeadRowPolicy::UnitScale,
    };
    cfg.strict = !a.lenient;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let cfg = merge_config(&a)?;
    print_config(json!({
        "command": "merge",
        "inputs": a.paths,
        "out": a.out,
        "report": a.report,
        "merge": cfg,
        "threads": crate::par::threads(),
    }));
    if matches!(cfg.method, Method::Robust | Method::Ties) {
        eprintln!("prune rate k = {}", cfg.prune_rate);
    }
    let sets = load_all(&a.paths)?;
    let (merged, report) = merge(&sets, &cfg)?;
    if report.dead_row_count() > 0 {
        log::warn!("{} dead rows replaced by unit scale", report.dead_row_count());
    }
    let report_json = report.to_json();
    save_adapter(&merged, &a.out)?;
    if let Some(path) = &a.report {
        write_atomic(path, report_json.as_bytes())?;
    }
    eprintln!(
        "merged {} tasks, {} modules with {} into {}",
        report.tasks.len(),
        merged.len(),
        cfg.method,
        a.out.display()
    );
    Ok(())
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<()> {
    if let Some(k) = a.prune_scale {
        crate::tensor::check_rate("--prune-scale", k)?;
    }
    print_config(json!({
        "command": "spectrum",
        "input": a.path,
        "module": a.module,
        "prune_scale": a.prune_scale,
        "out": a.out,
    }));
    let set = load_adapter(&a.path)?;
    let set = match a.prune_scale {
        Some(k) => prune_and_scale(&set, k, DeadRowPolicy::Error)?,
        None => set,
    };
    let report = spectrum_report(&set, a.module.as_deref())?;
    write_atomic(&a.out, report.to_csv().as_bytes())?;
    eprintln!("wrote spectra of {} modules to {}", report.rows.len(), a.out.display());
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs) -> Result<()> {
    let json_path = a.json.clone().unwrap_or_else(|| a.out.with_extension("json"));
    if json_path == a.out {
        return Err(Error::Parameter("--json must differ from --out".into()));
    }
    print_config(json!({
        "command": "robustness",
        "tasks": a.tasks,
        "merged": a.merged,
        "out": a.out,
        "json": json_path,
    }));
    let tasks = load_all(&a.tasks)?;
    let merged = load_adapter(&a.merged)?;
    let report = robustness_report(&tasks, &merged)?;
    let csv = report.to_csv();
    let json = report.to_json();
    write_atomic(&a.out, csv.as_bytes())?;
    write_atomic(&json_path, json.as_bytes())?;
    eprintln!(
        "compared {} task modules against {}",
        report.rows.len(),
        a.merged.display()
    );
    Ok(())
}

/// Parses an experiment config, reporting the JSON path of a bad field.
pub fn parse_experiment_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Validation(format!("{}: {path}: {inner}", origin.display()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let (text, origin) = match &a.config {
        Some(p) => (std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p.clone()),
        None => (DEFAULT_SYNTH_CONFIG.to_string(), PathBuf::from("<default config>")),
    };
    let mut cfg = parse_experiment_config(&text, &origin)?;
    if let Some(seed) = a.seed {
        cfg.seeds = vec![seed];
    }
    print_config(json!({
        "command": "synth",
        "experiment": cfg,
        "out": a.out,
        "threads": crate::par::threads(),
    }));
    let table = run_experiment(&cfg)?;
    for f in &table.failures {
        let method = f.method.map(|m| m.to_string()).unwrap_or_else(|| "training".into());
        eprintln!("cell failed: scenario {} seed {} {method}: {}", f.scenario, f.seed, f.message);
    }
    if !table.failures.is_empty() {
        return Err(Error::Numeric(format!(
            "{} experiment cells failed; no table written",
            table.failures.len()
        )));
    }
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    for spec in &cfg.scenarios {
        let ranking = table.ranking(&spec.name);
        let parts: Vec<String> = ranking
            .iter()
            .filter(|m| m.method != MethodSpec::Individual)
            .map(|m| format!("{} {:.4}", m.method, m.rel_err))
            .collect();
        let individual = table
            .mean(&spec.name, MethodSpec::Individual)
            .map(|m| format!(" (individual {:.4})", m.rel_err))
            .unwrap_or_default();
        let ms = table.scenario_ms.get(&spec.name).copied().unwrap_or(0.0);
        println!(
            "{}: mean rel_err {}{individual} [{ms:.0} ms]",
            spec.name,
            parts.join(" <= ")
        );
    }
    Ok(())
}
