use serde::Serialize;

use super::head_tail;
use crate::adapter::{AdapterSet, LoraPair};
use crate::error::{Error, Result};
use crate::tensor::lowrank_svd;

/// Descending singular values of `B · A`.
pub fn spectrum(pair: &LoraPair) -> Result<Vec<f64>> {
    Ok(lowrank_svd(&[(&pair.b, &pair.a)])?.sigma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub module: String,
    pub values: Vec<f64>,
    /// `σ₁`
    pub head: f64,
    /// Mean of `σ₂..σ_r` (0 for rank 1).
    pub tail_mean: f64,
    pub tail_head_ratio: f64,
}

impl SpectrumRow {
    fn new(module: &str, values: Vec<f64>) -> Self {
        let wrapped: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        let (head, tail) = head_tail(&wrapped);
        let head = head.unwrap_or(0.0);
        let tail_mean = tail.unwrap_or(0.0);
        let tail_head_ratio = if head > 0.0 { tail_mean / head } else { 0.0 };
        Self {
            module: module.to_string(),
            values,
            head,
            tail_mean,
            tail_head_ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub task: String,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumReport {
    /// One row per module: summary columns then `sigma_1..sigma_R`, blank
    /// where a module has fewer values than the widest one.
    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.values.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "module".to_string(),
            "head".into(),
            "tail_mean".into(),
            "tail_head_ratio".into(),
        ];
        header.extend((1..=width).map(|i| format!("sigma_{i}")));
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![
                row.module.clone(),
                row.head.to_string(),
                row.tail_mean.to_string(),
                row.tail_head_ratio.to_string(),
            ];
            rec.extend((0..width).map(|i| row.values.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }

    pub fn row(&self, module: &str) -> Option<&SpectrumRow> {
        self.rows.iter().find(|r| r.module == module)
    }
}

/// Modules whose name equals `filter` or starts with it; all modules when
/// `filter` is `None`. No match is a validation error listing the names.
pub fn select_modules<'a>(set: &'a AdapterSet, filter: Option<&str>) -> Result<Vec<&'a LoraPair>> {
    let Some(f) = filter else {
        return Ok(set.modules.values().collect());
    };
    let picked: Vec<&LoraPair> = match set.get(f) {
        Some(p) => vec![p],
        None => set
            .modules
            .values()
            .filter(|p| p.module_name.starts_with(f))
            .collect(),
    };
    if picked.is_empty() {
        let names: Vec<&str> = set.module_names().collect();
        return Err(Error::Validation(format!(
            "no module matches '{f}' in task '{}'; available: {}",
            set.task_name,
            names.join(", ")
        )));
    }
    Ok(picked)
}

pub fn spectrum_report(set: &AdapterSet, filter: Option<&str>) -> Result<SpectrumReport> {
    let pairs = select_modules(set, filter)?;
    let spectra = crate::par::map(&pairs, |p| spectrum(p));
    let mut rows = Vec::with_capacity(pairs.len());
    for (p, s) in pairs.iter().zip(spectra) {
        rows.push(SpectrumRow::new(&p.module_name, s?));
    }
    Ok(SpectrumReport {
        task: set.task_name.clone(),
        rows,
    })
}

/// Spectra of the same modules before and after some transform.
pub fn spectrum_sweep(
    before: &AdapterSet,
    after: &AdapterSet,
    filter: Option<&str>,
) -> Result<(SpectrumReport, SpectrumReport)> {
    let names = |s: &AdapterSet| s.module_names().map(str::to_string).collect::<Vec<_>>();
    if names(before) != names(after) {
        return Err(Error::Validation(format!(
            "module layouts differ between '{}' and '{}'",
            before.task_name, after.task_name
        )));
    }
    for (x, y) in before.modules.values().zip(after.modules.values()) {
        if (x.d_out(), x.d_in(), x.rank()) != (y.d_out(), y.d_in(), y.rank()) {
            return Err(Error::Validation(format!(
                "module '{}' has shape {}x{} rank {} before and {}x{} rank {} after",
                x.module_name,
                x.d_out(),
                x.d_in(),
                x.rank(),
                y.d_out(),
                y.d_in(),
                y.rank()
            )));
        }
    }
    Ok((spectrum_report(before, filter)?, spectrum_report(after, filter)?))
}

/// Per-index `σ_after / σ_before`; absent where `σ_before` is degenerate.
pub fn scaling_multiples(before: &[f64], after: &[f64]) -> Vec<Option<f64>> {
    before
        .iter()
        .zip(after)
        .map(|(&b, &a)| (b >= super::DEGENERATE_SIGMA).then(|| a / b))
        .collect()
}
