//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{masked, oracle_mask, random_sets, rel_err, rng, rotated_pair, uniform, Dense};
use lora_merge::adapter::{load_adapter, save_adapter};
use lora_merge::analysis::{robustness_report, scaling_multiples, spectrum};
use lora_merge::merge::{
    complementary_scaling, cross_task_normalize, dare_drop, merge, prune_and_scale, robust_merge,
    DeadRowPolicy, MergeConfig, Method,
};
use lora_merge::synth::{prepare, run_experiment, ExperimentConfig, MethodSpec, ScenarioSpec};
use lora_merge::tensor::{jacobi_svd, lowrank_svd, magnitude_mask, matmul, Matrix};
use lora_merge::{AdapterSet, Error, LoraPair};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shipped_config() -> ExperimentConfig {
    lora_merge::cli::parse_experiment_config(
        include_str!("../configs/default.json"),
        std::path::Path::new("configs/default.json"),
    )
    .expect("bundled config parses")
}

fn stark_scenario() -> (ExperimentConfig, ScenarioSpec) {
    let cfg = shipped_config();
    let spec = cfg
        .scenarios
        .iter()
        .find(|s| s.name == "stark_orthogonal")
        .expect("stark scenario shipped")
        .clone();
    (cfg, spec)
}

const STARK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn scaling_restoration() -> Outcome {
    let mut r = rng(1);
    let rates = [0.0, 0.3, 0.5, 0.9];
    let (mut rows_checked, mut dead, mut worst) = (0usize, 0usize, 0.0f64);
    for case in 0..1000 {
        let rows = r.gen_range(1..=64);
        let cols = r.gen_range(1..=256);
        let k = rates[case % rates.len()];
        let a = uniform(&mut r, rows, cols, 1.0);
        let mask = magnitude_mask(&a, k).map_err(|e| e.to_string())?;
        let keep = oracle_mask(&a, k);
        ensure(mask.bits() == keep.as_slice(), || format!("case {case}: mask differs from sort oracle"))?;
        let out = complementary_scaling(&a, &mask, DeadRowPolicy::UnitScale).map_err(|e| e.to_string())?;
        let pruned = masked(&a, &keep);
        for i in 0..rows {
            let original: f64 = a.row(i).iter().map(|v| (*v as f64).abs()).sum();
            let kept: f64 = (0..cols).map(|j| pruned.at(i, j).abs()).sum();
            if kept == 0.0 {
                dead += 1;
                ensure(out.incidents.iter().any(|&(row, _)| row == i), || {
                    format!("case {case}: dead row {i} not reported")
                })?;
                continue;
            }
            let restored = out.vector.entries[i] * kept;
            let rel = (restored - original).abs() / original;
            worst = worst.max(rel);
            ensure(rel <= 1e-6, || format!("case {case} row {i}: relative L1 gap {rel:e}"))?;
            rows_checked += 1;
        }
    }
    Ok(format!("{rows_checked} rows restored, worst rel gap {worst:.2e}, {dead} fully pruned rows reported"))
}

fn normalization_partition() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut instances = 0;
    for &n in &[1usize, 2, 4, 8] {
        for _ in 0..100 {
            let rank = r.gen_range(1..=16);
            let d_in = r.gen_range(8..=128);
            let k = [0.0, 0.3, 0.5, 0.9][r.gen_range(0..4)];
            let vectors = (0..n)
                .map(|_| {
                    let a = uniform(&mut r, rank, d_in, 1.0);
                    let mask = magnitude_mask(&a, k).unwrap();
                    complementary_scaling(&a, &mask, DeadRowPolicy::UnitScale).unwrap().vector
                })
                .collect::<Vec<_>>();
            let normalized = cross_task_normalize(&vectors).map_err(|e| e.to_string())?;
            for i in 0..rank {
                let sum: f64 = normalized.iter().map(|v| v.entries[i]).sum();
                worst = worst.max((sum - 1.0).abs());
                ensure((sum - 1.0).abs() <= 1e-6, || format!("N={n} index {i}: sum {sum}"))?;
            }
            instances += 1;
        }
    }
    Ok(format!("{instances} instances, worst |sum - 1| = {worst:.2e}"))
}

fn composed(set: &AdapterSet) -> Vec<Dense> {
    set.modules.values().map(|p| Dense::of(&p.compose())).collect()
}

fn degeneracy_chain() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = r.gen_range(1..=4);
        let modules = r.gen_range(1..=3);
        let rank = r.gen_range(1..=8);
        let d_out = r.gen_range(rank..=48);
        let d_in = r.gen_range(rank..=48);
        let lambda = r.gen_range(0.5..3.0);
        let sets = random_sets(&mut r, n, modules, d_out, d_in, rank);
        let (robust, _) = merge(&sets, &MergeConfig::robust(0.0, lambda)).map_err(|e| e.to_string())?;
        let (ta, _) = merge(&sets, &MergeConfig::task_arithmetic(lambda)).map_err(|e| e.to_string())?;
        let (dare, _) = merge(&sets, &MergeConfig::dare(0.0, lambda, case)).map_err(|e| e.to_string())?;
        let ta_w = composed(&ta);
        for (name, other) in [("robust", &robust), ("dare", &dare)] {
            for (x, y) in composed(other).iter().zip(&ta_w) {
                let e = rel_err(x, y);
                worst = worst.max(e);
                ensure(e <= 1e-6, || format!("case {case}: {name} vs task_arithmetic rel err {e:e}"))?;
            }
        }
    }
    // N = 1, k = 0: the factors are B·λ and A themselves.
    let sets = random_sets(&mut r, 1, 2, 24, 40, 4);
    let (m, _) = robust_merge(&sets, &MergeConfig::robust(0.0, 2.0)).map_err(|e| e.to_string())?;
    for (name, p) in &sets[0].modules {
        let q = &m.modules[name];
        ensure(q.a == p.a, || format!("{name}: A changed"))?;
        ensure(q.b == p.b.scale(2.0), || format!("{name}: B is not exactly 2·B"))?;
        ensure(q.compose() == p.b.scale(2.0).matmul_with(&p.a), || format!("{name}: composed update differs"))?;
    }
    Ok(format!("100 instances, worst rel err {worst:.2e}; N=1 k=0 exact"))
}

trait MatmulWith {
    fn matmul_with(&self, other: &Matrix) -> Matrix;
}

impl MatmulWith for Matrix {
    fn matmul_with(&self, other: &Matrix) -> Matrix {
        matmul(self, other).unwrap()
    }
}

/// Straight-line materialized reading of the merge procedure, in `f64`.
fn algorithm_oracle(sets: &[AdapterSet], module: &str, k: f64, lambda: f64) -> Option<Dense> {
    let mut ordered: Vec<&AdapterSet> = sets.iter().collect();
    ordered.sort_by(|x, y| x.task_name.cmp(&y.task_name));
    let pairs: Vec<&LoraPair> = ordered.iter().map(|s| &s.modules[module]).collect();
    let r = pairs[0].rank();
    let mut s_all = Vec::new();
    let mut a_tilde = Vec::new();
    let mut b_tilde = Vec::new();
    for p in &pairs {
        let at = masked(&p.a, &oracle_mask(&p.a, k));
        let bt = masked(&p.b, &oracle_mask(&p.b, k));
        let a = Dense::of(&p.a);
        let mut s = Vec::with_capacity(r);
        for i in 0..r {
            let num: f64 = (0..a.cols).map(|j| a.at(i, j).abs()).sum();
            let den: f64 = (0..a.cols).map(|j| at.at(i, j).abs()).sum();
            if den == 0.0 {
                return None;
            }
            s.push(num / den);
        }
        s_all.push(s);
        a_tilde.push(at);
        b_tilde.push(bt);
    }
    let totals: Vec<f64> = (0..r).map(|i| s_all.iter().map(|s| s[i]).sum()).collect();
    let (d_out, d_in) = (pairs[0].d_out(), pairs[0].d_in());
    let mut b_sum = Dense::zeros(d_out, r);
    let mut a_sum = Dense::zeros(r, d_in);
    for ((s, bt), at) in s_all.iter().zip(&b_tilde).zip(&a_tilde) {
        let mut scaled = bt.clone();
        for row in 0..d_out {
            for i in 0..r {
                scaled.data[row * r + i] *= s[i] / totals[i];
            }
        }
        b_sum.add_assign(&scaled);
        a_sum.add_assign(at);
    }
    let mut w = b_sum.mul(&a_sum);
    w.data.iter_mut().for_each(|v| *v *= lambda);
    Some(w)
}

fn algorithm_oracle_check() -> Outcome {
    let mut r = rng(4);
    let (mut worst, mut checked, mut dead) = (0.0f64, 0, 0);
    for case in 0..100 {
        let n = r.gen_range(1..=4);
        let rank = r.gen_range(1..=8);
        let d_out = r.gen_range(rank.max(8)..=64);
        let d_in = r.gen_range(rank.max(8)..=64);
        let k = [0.0, 0.3, 0.5, 0.8, 0.9][case % 5];
        let lambda = r.gen_range(0.5..3.0);
        let mut sets = random_sets(&mut r, n, 2, d_out, d_in, rank);
        sets.reverse();
        let result = robust_merge(&sets, &MergeConfig::robust(k, lambda));
        for module in ["layer0.proj", "layer1.proj"] {
            match (algorithm_oracle(&sets, module, k, lambda), &result) {
                (Some(want), Ok((merged, _))) => {
                    let got = Dense::of(&merged.modules[module].compose());
                    let e = rel_err(&got, &want);
                    worst = worst.max(e);
                    ensure(e <= 1e-6, || format!("case {case} {module}: rel err {e:e}"))?;
                    checked += 1;
                }
                (None, Err(Error::Numeric(_))) => dead += 1,
                (None, Ok(_)) => return Err(format!("case {case}: dead row not rejected")),
                // Another module of the same merge had a dead row.
                (Some(_), Err(Error::Numeric(_))) => {}
                (_, Err(e)) => return Err(format!("case {case}: unexpected error {e}")),
            }
        }
    }
    ensure(checked >= 150, || format!("only {checked} modules compared"))?;
    Ok(format!("{checked} modules match, worst rel err {worst:.2e}, {dead} dead-row cases agree"))
}

fn orthonormality_gap(m: &Matrix) -> f64 {
    let d = Dense::of(m);
    let mut worst = 0.0f64;
    for i in 0..d.cols {
        for j in 0..d.cols {
            let dot: f64 = (0..d.rows).map(|t| d.at(t, i) * d.at(t, j)).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    worst
}

fn svd_suite() -> Outcome {
    let mut r = rng(5);
    let (mut sig_worst, mut rec_worst, mut orth_worst) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let d = r.gen_range(2..=32);
        let terms = r.gen_range(1..=3);
        let mut factors = Vec::new();
        let mut budget = d;
        for _ in 0..terms {
            if budget == 0 {
                break;
            }
            let rank = r.gen_range(1..=budget.min(6));
            budget -= rank;
            let b = uniform(&mut r, d, rank, 1.0);
            let a = uniform(&mut r, rank, d, 1.0);
            factors.push((b, a));
        }
        let refs: Vec<(&Matrix, &Matrix)> = factors.iter().map(|(b, a)| (b, a)).collect();
        let low = lowrank_svd(&refs).map_err(|e| e.to_string())?;
        let mut product = Dense::zeros(d, d);
        for (b, a) in &factors {
            product.add_assign(&Dense::of(b).mul(&Dense::of(a)));
        }
        let materialized = Matrix::new(d, d, product.data.iter().map(|&v| v as f32).collect()).unwrap();
        let full = jacobi_svd(&materialized).map_err(|e| e.to_string())?;
        let scale = full.sigma[0].max(1.0);
        for (i, &s) in full.sigma.iter().enumerate() {
            let other = low.sigma.get(i).copied().unwrap_or(0.0);
            let gap = (s - other).abs() / scale;
            sig_worst = sig_worst.max(gap);
            ensure(gap <= 1e-6, || format!("case {case} d={d}: sigma_{i} {s} vs {other}"))?;
        }
        for (name, t) in [("lowrank", &low), ("jacobi", &full)] {
            let e = rel_err(&Dense::of(&t.reconstruct()), &product);
            rec_worst = rec_worst.max(e);
            ensure(e <= 1e-5, || format!("case {case}: {name} reconstruction rel err {e:e}"))?;
        }
        for m in [&full.u, &full.v, &low.u, &low.v] {
            let g = orthonormality_gap(m);
            orth_worst = orth_worst.max(g);
            ensure(g <= 1e-6, || format!("case {case}: orthonormality gap {g:e}"))?;
        }
    }
    // Roots of λ² − 30λ + 4 = 0 (the characteristic polynomial of CᵀC).
    let c = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let s = jacobi_svd(&c).map_err(|e| e.to_string())?.sigma;
    let disc = (30.0f64 * 30.0 - 16.0).sqrt();
    let want = [((30.0 + disc) / 2.0).sqrt(), ((30.0 - disc) / 2.0).sqrt()];
    for i in 0..2 {
        ensure((s[i] - want[i]).abs() <= 1e-4, || format!("fixture sigma {s:?} vs {want:?}"))?;
    }
    ensure((s[0] - 5.46499).abs() <= 1e-4 && (s[1] - 0.36597).abs() <= 1e-4, || format!("{s:?}"))?;
    Ok(format!(
        "200 instances: sigma gap {sig_worst:.1e}, reconstruction {rec_worst:.1e}, orthonormality {orth_worst:.1e}"
    ))
}

fn prune_scale_trend() -> Outcome {
    let mut r = rng(6);
    let sigma: Vec<f64> = (0..16).map(|i| 0.5f64.powi(i)).collect();
    let pair = rotated_pair(&mut r, 256, 256, &sigma);
    let set = AdapterSet::new("fixture").with_pair(pair.clone()).unwrap();
    let scaled = prune_and_scale(&set, 0.5, DeadRowPolicy::Error).map_err(|e| e.to_string())?;
    let before = spectrum(&pair).map_err(|e| e.to_string())?;
    let after = spectrum(&scaled.modules["proj"]).map_err(|e| e.to_string())?;
    let tail_ratio = |s: &[f64]| s[1..].iter().sum::<f64>() / (s.len() - 1) as f64 / s[0];
    let (rb, ra) = (tail_ratio(&before), tail_ratio(&after));
    ensure(ra > rb, || format!("tail/head ratio {rb:.4e} -> {ra:.4e} did not increase"))?;
    let multiples: Vec<f64> = scaling_multiples(&before, &after).into_iter().map(|m| m.unwrap()).collect();
    let head = multiples[0];
    let tail_mean = multiples[1..].iter().sum::<f64>() / 15.0;
    ensure(tail_mean > head, || format!("tail multiple {tail_mean} <= head multiple {head}"))?;
    ensure(multiples[15] > multiples[0], || format!("multiples {multiples:?}"))?;
    let index: Vec<f64> = (0..16).map(|i| i as f64).collect();
    let corr = common::rank_correlation(&index, &multiples);
    ensure(corr > 0.0, || format!("rank correlation of multiple with index {corr}"))?;
    Ok(format!(
        "tail/head {rb:.3e} -> {ra:.3e}; multiple head {head:.3} tail mean {tail_mean:.3} last {:.3}; rank corr {corr:.2}",
        multiples[15]
    ))
}

fn direction_trend() -> Outcome {
    let (cfg, spec) = stark_scenario();
    let mut sums = [[0.0f64; 3]; 2];
    let mut lines = Vec::new();
    for seed in STARK_SEEDS {
        let prepared = prepare(&spec, seed).map_err(|e| e.to_string())?;
        for (slot, method) in [Method::TaskArithmetic, Method::Robust].into_iter().enumerate() {
            let (merged, _) = merge(&prepared.adapters, &cfg.merge.config(method, seed)).map_err(|e| e.to_string())?;
            let report = robustness_report(&prepared.adapters, &merged).map_err(|e| e.to_string())?;
            let o = &report.overall;
            let vals = [
                o.head_sim_v.unwrap_or(0.0),
                o.tail_sim_v_mean.unwrap_or(0.0),
                o.tail_ratio_mean.unwrap_or(0.0),
            ];
            for (acc, v) in sums[slot].iter_mut().zip(vals) {
                *acc += v / STARK_SEEDS.len() as f64;
            }
            lines.push(format!(
                "    seed {seed} {method}: head sim {:.4} tail sim {:.4} tail ratio {:.4e}",
                vals[0], vals[1], vals[2]
            ));
        }
    }
    let [ta, robust] = sums;
    let checks = [
        ("(a) TA head sim > TA tail sim", ta[0] > ta[1]),
        ("(b) robust tail sim >= TA tail sim", robust[1] >= ta[1]),
        ("(c) robust tail ratio >= TA tail ratio", robust[2] >= ta[2]),
    ];
    let verdicts: Vec<String> = checks
        .iter()
        .map(|(name, ok)| format!("{name}: {}", if *ok { "ok" } else { "FAILED" }))
        .collect();
    let detail = format!(
        "TA head sim {:.4} tail sim {:.4} tail ratio {:.4e}; robust head sim {:.4} tail sim {:.4} tail ratio {:.4e}; {}",
        ta[0],
        ta[1],
        ta[2],
        robust[0],
        robust[1],
        robust[2],
        verdicts.join(", ")
    );
    if checks.iter().all(|(_, ok)| *ok) {
        Ok(detail)
    } else {
        Err(format!("{detail}\n{}", lines.join("\n")))
    }
}

fn merging_quality() -> Outcome {
    let (mut cfg, spec) = stark_scenario();
    cfg.scenarios = vec![spec.clone()];
    cfg.seeds = STARK_SEEDS.to_vec();
    cfg.methods = vec![
        MethodSpec::Individual,
        MethodSpec::Merge(Method::Robust),
        MethodSpec::Merge(Method::TaskArithmetic),
    ];
    let table = run_experiment(&cfg).map_err(|e| e.to_string())?;
    ensure(table.failures.is_empty(), || format!("failed cells: {:?}", table.failures))?;
    let mean = |m| table.mean(&spec.name, m).map(|r| r.rel_err).ok_or("missing mean row");
    let robust = mean(MethodSpec::Merge(Method::Robust))?;
    let ta = mean(MethodSpec::Merge(Method::TaskArithmetic))?;
    let individual = mean(MethodSpec::Individual)?;
    let detail = format!("mean rel_err robust {robust:.4} task_arithmetic {ta:.4} individual {individual:.4}");
    ensure(robust <= ta, || detail.clone())?;
    Ok(detail)
}

fn dare_contract() -> Outcome {
    let mut r = rng(9);
    let m = uniform(&mut r, 100, 100, 1.0);
    let mut notes = Vec::new();
    for p in [0.1, 0.3, 0.5, 0.9] {
        let (dropped, count) = dare_drop(&m, p, 0, "task", "layer.lora_A.weight");
        let mut kept = 0;
        for (&orig, &got) in m.as_slice().iter().zip(dropped.as_slice()) {
            if got != 0.0 {
                kept += 1;
                let want = (orig as f64 / (1.0 - p)) as f32;
                ensure(got.to_bits() == want.to_bits(), || format!("p={p}: survivor {got} != {want}"))?;
            }
        }
        ensure(kept + count == 10_000, || format!("p={p}: counts {kept}+{count}"))?;
        let frac = kept as f64 / 10_000.0;
        ensure((frac - (1.0 - p)).abs() <= 0.03, || format!("p={p}: kept fraction {frac}"))?;
        notes.push(format!("p={p} kept {frac:.4}"));
    }
    let sets = random_sets(&mut r, 3, 2, 32, 48, 4);
    let (dare, _) = merge(&sets, &MergeConfig::dare(0.0, 2.0, 7)).map_err(|e| e.to_string())?;
    let (ta, _) = merge(&sets, &MergeConfig::task_arithmetic(2.0)).map_err(|e| e.to_string())?;
    for (x, y) in dare.modules.values().zip(ta.modules.values()) {
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&x.a) == bits(&y.a) && bits(&x.b) == bits(&y.b), || "p=0 differs from task_arithmetic".into())?;
    }
    Ok(format!("{}; p=0 bit-identical to task_arithmetic", notes.join(", ")))
}

fn raw_file(header: &str, data: &[u8]) -> Vec<u8> {
    let mut out = (header.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(10);
    let mut set = AdapterSet::new("roundtrip");
    for m in 0..3 {
        let mut a = uniform(&mut r, 4, 24, 1.0).into_vec();
        a[0] = -0.0;
        a[1] = f32::MIN_POSITIVE / 8.0;
        a[2] = f32::MAX;
        let a = Matrix::new(4, 24, a).unwrap();
        let b = uniform(&mut r, 16, 4, 1e-3);
        set.insert(LoraPair::new(format!("model.layers.{m}.q_proj"), a, b).unwrap().with_alpha(16.0)).unwrap();
    }
    set.metadata.insert("note".into(), "fixture".into());
    let path = dir.path().join("roundtrip.safetensors");
    save_adapter(&set, &path).map_err(|e| e.to_string())?;
    let back = load_adapter(&path).map_err(|e| e.to_string())?;
    ensure(back == set, || "loaded adapter differs".into())?;
    for (x, y) in set.modules.values().zip(back.modules.values()) {
        let same = |p: &Matrix, q: &Matrix| {
            p.as_slice().iter().zip(q.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits())
        };
        ensure(same(&x.a, &y.a) && same(&x.b, &y.b), || "bits differ".into())?;
    }

    let bin = env!("CARGO_BIN_EXE_lora-merge");
    let malformed = dir.path().join("malformed.safetensors");
    std::fs::write(&malformed, raw_file(r#"{"p.lora_A.weight": ]}"#, &[])).unwrap();
    let orphan = dir.path().join("orphan.safetensors");
    std::fs::write(
        &orphan,
        raw_file(r#"{"p.lora_A.weight":{"dtype":"F32","shape":[1,2],"data_offsets":[0,8]}}"#, &[0; 8]),
    )
    .unwrap();
    let out = dir.path().join("merged.safetensors");
    let run = |input: &std::path::Path| {
        Command::new(bin)
            .args(["merge", input.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .expect("binary runs")
    };
    let bad = run(&malformed);
    let bad_err = String::from_utf8_lossy(&bad.stderr).to_string();
    ensure(bad.status.code() == Some(3), || format!("malformed header exit {:?}: {bad_err}", bad.status.code()))?;
    ensure(bad_err.contains("malformed.safetensors") && bad_err.contains("byte 28"), || bad_err.clone())?;
    let orph = run(&orphan);
    let orph_err = String::from_utf8_lossy(&orph.stderr).to_string();
    ensure(orph.status.code() == Some(2), || format!("orphan exit {:?}: {orph_err}", orph.status.code()))?;
    ensure(orph_err.contains("'p'") && orph_err.contains("lora_B"), || orph_err.clone())?;
    ensure(!out.exists(), || "output written on failure".into())?;
    Ok("F32 round trip bit-exact; malformed header exit 3, orphan tensor exit 2".into())
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("scaling restoration", 10, scaling_restoration),
        ("normalization partition", 5, normalization_partition),
        ("degeneracy chain", 10, degeneracy_chain),
        ("algorithm oracle", 20, algorithm_oracle_check),
        ("svd suite", 30, svd_suite),
        ("prune+scale spectrum trend", 5, prune_scale_trend),
        ("direction robustness trend", 60, direction_trend),
        ("merging quality", 60, merging_quality),
        ("dare contract", 5, dare_contract),
        ("format round trip", 5, format_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("over runtime budget of {budget} s ({d})"))
            }
            other => other,
        };
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{secs:.2} s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.2} s] {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
