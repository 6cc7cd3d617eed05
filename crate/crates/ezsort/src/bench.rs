//! Parallel benchmark driver and report checks.

use rayon::prelude::*;

use ezsort_core::simulator::{exhaustive_count, run_seed};
use ezsort_core::sorter::mergesort_worst_case;
use ezsort_core::{BenchConfig, BenchReport};

/// Same result as the serial core driver, with seeds spread over threads.
/// Per-seed results keep the order of `cfg.seeds`.
pub fn run_parallel(cfg: &BenchConfig) -> ezsort_core::Result<BenchReport> {
    cfg.validate()?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<ezsort_core::Result<Vec<_>>>()?;
    Ok(BenchReport::from_results(cfg.n, per_seed))
}

/// Structural checks every report must pass. Returns one message per
/// violation.
pub fn check_report(report: &BenchReport, fraction_band: Option<(f64, f64)>) -> Vec<String> {
    let mut bad = Vec::new();
    let n = report.n as usize;
    if report.exhaustive_count != exhaustive_count(report.n) {
        bad.push(format!("exhaustive_count {} != n(n-1)/2", report.exhaustive_count));
    }
    let bound = mergesort_worst_case(n);
    for r in &report.per_seed {
        let total = r.ezsort_human + r.ezsort_auto;
        if total > bound || r.all_human_count > bound {
            bad.push(format!("seed {}: comparison count exceeds worst-case bound {bound}", r.seed));
        }
        for (name, v) in [("spearman", r.spearman), ("kendall_tau_b", r.kendall_tau_b)] {
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                bad.push(format!("seed {}: {name} = {v} outside [-1, 1]", r.seed));
            }
        }
    }
    let denom = report.ezsort_human_count.mean + report.ezsort_auto_count.mean;
    if denom > 0.0 && (report.human_fraction - report.ezsort_human_count.mean / denom).abs() > 1e-12 {
        bad.push("human_fraction != human / (human + auto)".into());
    }
    if let Some((lo, hi)) = fraction_band {
        if !(lo..=hi).contains(&report.human_fraction) {
            bad.push(format!(
                "human_fraction {:.4} outside [{lo}, {hi}]",
                report.human_fraction
            ));
        }
    }
    bad
}
