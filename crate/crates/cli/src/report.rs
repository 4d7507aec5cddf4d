//! Text and CSV renderings of estimator output.

use std::fmt::Write;

use spikeid_core::IdReport;

use crate::io::format_number;

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(", ")
}

/// Discrepancy of the selected epsilon, `NaN` when it was never scored.
pub fn chosen_discrepancy(report: &IdReport) -> f64 {
    report
        .epsilon_candidates
        .iter()
        .position(|&e| e == report.thresholds.epsilon)
        .and_then(|i| report.discrepancy_trace.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// `key = value` lines. Warnings from earlier stages are appended to the
/// report's own.
pub fn report_text(report: &IdReport, noise_method: &str, extra_warnings: &[String]) -> String {
    let th = &report.thresholds;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("l", report.l.to_string());
    kv("n_channels", report.n_channels.to_string());
    kv("n_samples", report.n_samples.to_string());
    kv("gamma", format_number(report.gamma_t));
    kv("noise_method", noise_method.to_string());
    kv("whitened", report.whitened.to_string());
    kv("whitener_floor_applied", report.floor_applied.to_string());
    kv("delta", format_number(th.delta));
    kv("epsilon", format_number(th.epsilon));
    kv("epsilon0", format_number(th.epsilon0));
    kv("epsilon_prime", format_number(th.epsilon_prime));
    kv("bulk_estimate", format_number(report.bulk_estimate));
    kv("estimated_spikes", join(report.estimated_spikes.iter().map(|&v| format_number(v))));
    kv("group_sizes", join(report.groups.iter().map(|g| g.len().to_string())));
    kv("group_means", join(report.group_means.iter().map(|&v| format_number(v))));
    kv("epsilon_candidates", report.epsilon_candidates.len().to_string());
    kv("chosen_discrepancy", format_number(chosen_discrepancy(report)));
    let warnings: Vec<&String> = extra_warnings.iter().chain(&report.warnings).collect();
    kv("warnings", warnings.len().to_string());
    for (i, w) in warnings.iter().enumerate() {
        kv(&format!("warning.{}", i + 1), w.replace('\n', " "));
    }
    out
}

/// `rank,sample_eigenvalue,group,estimated_spike`; bulk rows leave the last two empty.
pub fn eigenvalue_csv(report: &IdReport) -> String {
    let mut out = String::from("rank,sample_eigenvalue,group,estimated_spike\n");
    for (i, &l) in report.sample_eigenvalues.iter().enumerate() {
        let (group, spike) = match report.group_of(i) {
            Some(g) => ((g + 1).to_string(), format_number(report.estimated_spikes[g])),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{group},{spike}", i + 1, format_number(l));
    }
    out
}

pub fn epsilon_trace_csv(report: &IdReport) -> String {
    let mut out = String::from("epsilon,discrepancy\n");
    for (e, d) in report.epsilon_candidates.iter().zip(&report.discrepancy_trace) {
        let _ = writeln!(out, "{},{}", format_number(*e), format_number(*d));
    }
    out
}

/// One row of the method comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    /// PCA counts at 90%, 80% and 70% explained variance.
    pub pca: [usize; 3],
    pub aic: usize,
    pub mdl: usize,
    pub eif: usize,
    /// Estimator counts with FFT, residual and threshold noise; `None` on failure.
    pub spe: [Option<usize>; 3],
}

pub const COMPARE_HEADER: &str =
    "snr,pca_0.9,pca_0.8,pca_0.7,aic,mdl,eif,spe_fft,spe_residual,spe_threshold";

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for r in rows {
        let spe = r.spe.map(|s| s.map_or("NA".to_string(), |v| v.to_string()));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.label, r.pca[0], r.pca[1], r.pca[2], r.aic, r.mdl, r.eif, spe[0], spe[1], spe[2]
        );
    }
    out
}

/// One analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub start_ms: f64,
    pub end_ms: f64,
    pub l: usize,
}

pub fn window_csv(rows: &[WindowRow]) -> String {
    let mut out = String::from("t_start_ms,t_end_ms,l\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", format_number(r.start_ms), format_number(r.end_ms), r.l);
    }
    out
}
