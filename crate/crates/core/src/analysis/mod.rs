//! Spectral diagnostics of adapters and merges.
//!
//! Spectra come from the factored SVD of `B · A`. Robustness compares a
//! task's singular triples with the merged adapter's, pairing them by
//! descending singular-value index.

mod robustness;
mod spectrum;

pub use robustness::{
    direction_similarity, robustness_report, value_ratio, IndexComparison, RobustnessReport,
    RobustnessRow, RobustnessSummary, TaskMean, ValueRatios, CSV_HEADER,
};
pub use spectrum::{
    scaling_multiples, select_modules, spectrum, spectrum_report, spectrum_sweep, SpectrumReport,
    SpectrumRow,
};

/// Singular values below this are treated as absent.
pub const DEGENERATE_SIGMA: f64 = 1e-8;

/// Head value and mean of the remaining values, skipping absent entries.
pub(crate) fn head_tail(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let head = values.first().copied().flatten();
    let tail: Vec<f64> = values.iter().skip(1).filter_map(|v| *v).collect();
    let tail_mean = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
    (head, tail_mean)
}
