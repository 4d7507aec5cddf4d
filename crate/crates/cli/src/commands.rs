//! The subcommands. Every run writes its outputs plus a manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use spikeid_core::baselines::{aic_count, eif_count, mdl_count, pca_count};
use spikeid_core::simulator::simulate;
use spikeid_core::{
    estimate_noise, intrinsic_dimensionality, sample_covariance, symmetric_eigenvalues_desc,
    CovarianceMatrix, DataMatrix, IdConfig, IdReport, NoiseMethod, NoiseParams,
};

use crate::config::{Command, Manifest, NoiseChoice, RunConfig, Snr};
use crate::error::{CliError, Result};
use crate::io::{encode, ingest, write_atomic};
use crate::report::{
    compare_csv, eigenvalue_csv, epsilon_trace_csv, report_text, window_csv, CompareRow, WindowRow,
};
use crate::svg::{eigenvalue_scatter, window_steps};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    /// Written files relative to the output directory, manifest excluded.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: RunOutcome,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            outcome: RunOutcome::default(),
        }
    }

    fn bytes(&mut self, name: String, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(&name), bytes)?;
        self.outcome.outputs.push(name);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.bytes(name.to_string(), text.as_bytes())
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut w = Writer::new(&cfg.output_dir);
    match cfg.command {
        Command::Simulate => cmd_simulate(cfg, &mut w)?,
        Command::Estimate => cmd_estimate(cfg, &mut w)?,
        Command::Compare => cmd_compare(cfg, &mut w)?,
        Command::Window => cmd_window(cfg, &mut w)?,
    }
    Manifest::new(cfg, w.outcome.outputs.clone()).write(&cfg.output_dir)?;
    Ok(w.outcome)
}

/// Replays a manifest. Outputs go next to the manifest unless `output_dir` is given.
pub fn rerun(manifest: &Path, output_dir: Option<PathBuf>) -> Result<RunOutcome> {
    let m = Manifest::read(manifest)?;
    let mut cfg = m.config;
    cfg.output_dir = output_dir.unwrap_or_else(|| match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    });
    run(&cfg)
}

fn summarize(mut warnings: Vec<String>, keep: usize) -> Vec<String> {
    if warnings.len() > keep + 1 {
        let rest = warnings.len() - keep;
        warnings.truncate(keep);
        warnings.push(format!("... and {rest} more noise-estimation warnings"));
    }
    warnings
}

fn noise_covariance(
    data: &DataMatrix,
    choice: NoiseChoice,
    params: &NoiseParams,
) -> Result<(Option<CovarianceMatrix>, Vec<String>)> {
    match choice.method() {
        None => Ok((None, Vec::new())),
        Some(m) => {
            let n = estimate_noise(data, m, params)?;
            Ok((Some(n.covariance), summarize(n.warnings, 3)))
        }
    }
}

/// Noise estimation followed by the estimator.
pub fn identify(
    data: &DataMatrix,
    choice: NoiseChoice,
    params: &NoiseParams,
    id: &IdConfig,
) -> Result<(IdReport, Vec<String>)> {
    let (noise, warnings) = noise_covariance(data, choice, params)?;
    let report = intrinsic_dimensionality(data, noise.as_ref(), id)?;
    Ok((report, warnings))
}

fn noise_name(choice: NoiseChoice) -> &'static str {
    match choice.method() {
        Some(m) => m.name(),
        None => "none",
    }
}

fn cmd_simulate(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let runs = cfg
        .snrs
        .par_iter()
        .map(|&snr| Ok((snr, simulate(&cfg.simulation_config(snr))?)))
        .collect::<Result<Vec<_>>>()?;
    let ext = cfg.format.extension();
    for (snr, out) in runs {
        let stem = format!("sim_snr-{snr}");
        let clean_name = format!("{stem}_clean.{ext}");
        w.bytes(format!("{stem}.{ext}"), &encode(&out.averaged, cfg.format))?;
        w.bytes(clean_name.clone(), &encode(&out.clean, cfg.format))?;
        let truth = json!({
            "snr": snr.to_string(),
            "n_dipoles": out.n_dipoles,
            "n_channels": out.averaged.n_channels(),
            "n_samples": out.averaged.n_samples(),
            "n_trials": cfg.simulation.n_trials,
            "seed": cfg.seed,
            "clean_signal": clean_name,
            "noise_variances": out.noise_variances,
            "warnings": out.warnings,
        });
        let mut text = serde_json::to_string_pretty(&truth).expect("plain JSON values");
        text.push('\n');
        w.text(&format!("{stem}_truth.json"), &text)?;
        w.outcome.warnings.extend(out.warnings.iter().map(|m| format!("snr {snr}: {m}")));
    }
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let data = ingest(&cfg.inputs[0], cfg.format, cfg.sample_period_ms)?;
    let (report, warnings) = identify(&data, cfg.noise_method, &cfg.noise, &cfg.id)?;
    w.text("report.txt", &report_text(&report, noise_name(cfg.noise_method), &warnings))?;
    w.text("eigenvalues.csv", &eigenvalue_csv(&report))?;
    w.text("epsilon_trace.csv", &epsilon_trace_csv(&report))?;
    w.text("eigenvalues.svg", &eigenvalue_scatter(&report))?;
    w.outcome.warnings.extend(warnings);
    w.outcome.warnings.extend(report.warnings);
    Ok(())
}

enum RowSource<'a> {
    Simulated(Snr),
    File(&'a Path),
}

/// PCA, AIC, MDL and EIF on the raw sample covariance, then the estimator
/// under each noise estimator.
pub fn compare_row(
    label: String,
    data: &DataMatrix,
    cfg: &RunConfig,
) -> Result<(CompareRow, Vec<String>)> {
    let rhat = sample_covariance(data, cfg.id.center)?;
    let eigs = symmetric_eigenvalues_desc(rhat.values());
    let t = data.n_samples();
    let pca = [
        pca_count(&eigs, 0.9)?.count,
        pca_count(&eigs, 0.8)?.count,
        pca_count(&eigs, 0.7)?.count,
    ];
    let mut warnings = Vec::new();
    let mut spe = [None; 3];
    for (slot, method) in spe.iter_mut().zip(NoiseMethod::ESTIMATORS) {
        let choice = match method {
            NoiseMethod::Fft => NoiseChoice::Fft,
            NoiseMethod::Residual => NoiseChoice::Residual,
            _ => NoiseChoice::Threshold,
        };
        match identify(data, choice, &cfg.noise, &cfg.id) {
            Ok((r, _)) => *slot = Some(r.l),
            Err(CliError::Config(m)) => return Err(CliError::Config(m)),
            Err(e) => warnings.push(format!("{label}, {}: {e}", method.name())),
        }
    }
    let row = CompareRow {
        label,
        pca,
        aic: aic_count(&eigs, t)?.count,
        mdl: mdl_count(&eigs, t)?.count,
        eif: eif_count(&eigs, t)?.count,
        spe,
    };
    Ok((row, warnings))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
        .replace([',', '\n'], "_")
}

fn cmd_compare(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let sources: Vec<RowSource> = if cfg.inputs.is_empty() {
        cfg.snrs.iter().map(|&s| RowSource::Simulated(s)).collect()
    } else {
        cfg.inputs.iter().map(|p| RowSource::File(p)).collect()
    };
    let results = sources
        .par_iter()
        .map(|src| {
            let (label, data) = match src {
                RowSource::Simulated(snr) => (snr.to_string(), simulate(&cfg.simulation_config(*snr))?.averaged),
                RowSource::File(p) => (file_label(p), ingest(p, cfg.format, cfg.sample_period_ms)?),
            };
            compare_row(label, &data, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (row, warnings) in results {
        rows.push(row);
        w.outcome.warnings.extend(warnings);
    }
    w.text("compare.csv", &compare_csv(&rows))
}

fn whole_samples(ms: f64, period: f64, what: &str) -> Result<usize> {
    let n = ms / period;
    let r = n.round();
    if (n - r).abs() > 1e-9 * r.max(1.0) || r < 1.0 {
        return Err(CliError::Config(format!(
            "{what} of {ms} ms is not a positive whole number of {period} ms samples"
        )));
    }
    Ok(r as usize)
}

/// Start samples of every full window.
pub fn window_starts(n_samples: usize, len: usize, stride: usize) -> Vec<usize> {
    if len > n_samples || stride == 0 {
        return Vec::new();
    }
    (0..=(n_samples - len) / stride).map(|i| i * stride).collect()
}

fn window_series(
    data: &DataMatrix,
    len: usize,
    stride: usize,
    global: Option<&CovarianceMatrix>,
    cfg: &RunConfig,
) -> Result<Vec<WindowRow>> {
    let period = data.sample_period_ms();
    window_starts(data.n_samples(), len, stride)
        .par_iter()
        .map(|&start| {
            let win = data.window(start, len)?;
            let l = match (global, cfg.noise_method) {
                (Some(n), _) => intrinsic_dimensionality(&win, Some(n), &cfg.id)?.l,
                (None, choice) => identify(&win, choice, &cfg.noise, &cfg.id)?.0.l,
            };
            Ok(WindowRow {
                start_ms: start as f64 * period,
                end_ms: (start + len) as f64 * period,
                l,
            })
        })
        .collect()
}

fn cmd_window(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let data = ingest(&cfg.inputs[0], cfg.format, cfg.sample_period_ms)?;
    let period = data.sample_period_ms();
    let len = whole_samples(cfg.window.window_ms, period, "window")?;
    let stride = whole_samples(cfg.window.stride_ms, period, "stride")?;
    if len > data.n_samples() {
        return Err(CliError::Config(format!(
            "window of {} ms is longer than the {} ms recording",
            cfg.window.window_ms,
            data.duration_ms()
        )));
    }
    let global = if cfg.window.global_noise {
        let (n, warnings) = noise_covariance(&data, cfg.noise_method, &cfg.noise)?;
        w.outcome.warnings.extend(warnings);
        n
    } else {
        None
    };
    let moving = window_series(&data, len, stride, global.as_ref(), cfg)?;
    let equidistant = window_series(&data, len, len, global.as_ref(), cfg)?;
    w.text("windows_moving.csv", &window_csv(&moving))?;
    w.text("windows_equidistant.csv", &window_csv(&equidistant))?;
    w.text(
        "windows.svg",
        &window_steps(&[("moving", &moving), ("equidistant", &equidistant)]),
    )
}
