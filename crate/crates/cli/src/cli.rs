//! Argument parsing and process exit codes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikeid_core::{Discrepancy, Epsilon0, NormMode, SamplingDist, StopRule};

use crate::commands::{rerun, run, RunOutcome};
use crate::config::{default_snrs, Command, NoiseChoice, Preset, RunConfig, Snr};
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK};
use crate::io::DataFormat;

#[derive(Debug, Parser)]
#[command(name = "spikeid", version, about = "Count latent sources in multichannel recordings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Simulate trial-averaged recordings from current dipoles, one per SNR.
    Simulate {
        #[command(flatten)]
        out: OutputArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Estimate the number of sources in one recording.
    Estimate {
        #[command(flatten)]
        out: OutputArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Table of PCA, AIC, MDL, EIF and estimator counts across SNRs or files.
    Compare {
        #[command(flatten)]
        out: OutputArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        noise: NoiseParamArgs,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Source counts over moving and equidistant windows.
    Window {
        #[command(flatten)]
        out: OutputArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        win: WindowArgs,
    },
    /// Repeat the run recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Master seed for every random stage.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Format of data files read or written.
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    #[arg(long, default_value_t = 1.0)]
    pub sample_period_ms: f64,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Recording to analyse; `compare` accepts several.
    #[arg(long)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseParamArgs {
    /// Top fraction of the spectrum used by the FFT noise estimator.
    #[arg(long, default_value_t = 0.25)]
    pub band_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub ar_order: usize,
    #[arg(long, default_value_t = 2.5)]
    pub threshold_constant: f64,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = NoiseChoice::Fft)]
    pub noise_method: NoiseChoice,
    #[command(flatten)]
    pub params: NoiseParamArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Fraction,
    Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiscrepancyArg {
    Spectrum,
    MeanVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    Gaussian,
    Uniform,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    One,
    K,
    KSquared,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Epsilon grid step: `auto` (smallest eigenvalue), a value, or a
    /// percentage of the top eigenvalue such as `10%`.
    #[arg(long, default_value = "auto", value_parser = parse_epsilon0)]
    pub epsilon0: Epsilon0,
    /// Fixed bulk threshold instead of the learned one.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = StopArg::Fraction)]
    pub stop_rule: StopArg,
    #[arg(long, default_value_t = 0.4)]
    pub fraction_p: f64,
    /// Monte-Carlo draws per epsilon candidate.
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    #[arg(long, value_enum, default_value_t = DiscrepancyArg::Spectrum)]
    pub discrepancy: DiscrepancyArg,
    #[arg(long, value_enum, default_value_t = DistArg::Gaussian)]
    pub dist: DistArg,
    /// Fail instead of reporting zero sources when no spike gap exists.
    #[arg(long)]
    pub strict_pure_noise: bool,
    /// Rescale both covariances before whitening.
    #[arg(long, value_enum)]
    pub normalize: Option<NormArg>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Signal-to-noise ratio; repeat for several, `inf` for noise-free.
    #[arg(long)]
    pub snr: Vec<Snr>,
    #[arg(long, value_enum, default_value_t = Preset::Reference)]
    pub preset: Preset,
    #[arg(long, default_value_t = 128)]
    pub sensors: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 2000.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 600.0)]
    pub stride_ms: f64,
    /// Estimate the noise once from the whole recording.
    #[arg(long)]
    pub global_noise: bool,
}

pub fn parse_epsilon0(s: &str) -> Result<Epsilon0, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Epsilon0::SmallestEigenvalue);
    }
    let (num, pct) = match s.strip_suffix('%') {
        Some(n) => (n, true),
        None => (s, false),
    };
    let v: f64 = num.trim().parse().map_err(|e| format!("bad epsilon0 '{s}': {e}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("epsilon0 must be positive, got '{s}'"));
    }
    Ok(if pct {
        Epsilon0::FractionOfTop(v / 100.0)
    } else {
        Epsilon0::Absolute(v)
    })
}

impl OutputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.output_dir = self.output_dir.clone();
        cfg.seed = self.seed;
        cfg.id.seed = self.seed;
        cfg.format = self.format;
        cfg.sample_period_ms = self.sample_period_ms;
    }
}

impl NoiseParamArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.noise.band_fraction = self.band_fraction;
        cfg.noise.ar_order = self.ar_order;
        cfg.noise.threshold_constant = self.threshold_constant;
    }
}

impl EstimatorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let id = &mut cfg.id;
        id.epsilon0 = self.epsilon0;
        id.delta = self.delta;
        id.stop_rule = match self.stop_rule {
            StopArg::Fraction => StopRule::Fraction(self.fraction_p),
            StopArg::Span => StopRule::Span,
        };
        id.discrepancy = match self.discrepancy {
            DiscrepancyArg::Spectrum => Discrepancy::Spectrum {
                replicates: self.mc_samples,
            },
            DiscrepancyArg::MeanVector => Discrepancy::MeanVector {
                samples: self.mc_samples,
            },
        };
        id.dist = match self.dist {
            DistArg::Gaussian => SamplingDist::Gaussian,
            DistArg::Uniform => SamplingDist::Uniform,
            DistArg::T => SamplingDist::T,
        };
        id.strict_pure_noise = self.strict_pure_noise;
        id.normalize = self.normalize.map(|n| match n {
            NormArg::One => NormMode::One,
            NormArg::K => NormMode::K,
            NormArg::KSquared => NormMode::KSquared,
        });
    }
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.snrs = if self.snr.is_empty() {
            default_snrs()
        } else {
            self.snr.clone()
        };
        cfg.simulation.preset = self.preset;
        cfg.simulation.n_sensors = self.sensors;
        cfg.simulation.n_samples = self.samples;
        cfg.simulation.n_trials = self.trials;
    }
}

/// The run configuration for a parsed command; `None` for `rerun`.
pub fn to_config(cmd: &Cmd) -> Option<RunConfig> {
    let cfg = match cmd {
        Cmd::Simulate { out, sim } => {
            let mut c = RunConfig::new(Command::Simulate);
            out.apply(&mut c);
            sim.apply(&mut c);
            c
        }
        Cmd::Estimate { out, input, noise, est } => {
            let mut c = RunConfig::new(Command::Estimate);
            out.apply(&mut c);
            c.inputs = input.input.clone();
            c.noise_method = noise.noise_method;
            noise.params.apply(&mut c);
            est.apply(&mut c);
            c
        }
        Cmd::Compare { out, input, sim, noise, est } => {
            let mut c = RunConfig::new(Command::Compare);
            out.apply(&mut c);
            c.inputs = input.input.clone();
            sim.apply(&mut c);
            noise.apply(&mut c);
            est.apply(&mut c);
            c
        }
        Cmd::Window { out, input, noise, est, win } => {
            let mut c = RunConfig::new(Command::Window);
            out.apply(&mut c);
            c.inputs = input.input.clone();
            c.noise_method = noise.noise_method;
            noise.params.apply(&mut c);
            est.apply(&mut c);
            c.window.window_ms = win.window_ms;
            c.window.stride_ms = win.stride_ms;
            c.window.global_noise = win.global_noise;
            c
        }
        Cmd::Rerun { .. } => return None,
    };
    Some(cfg)
}

pub fn execute(cmd: &Cmd) -> Result<RunOutcome, CliError> {
    match cmd {
        Cmd::Rerun { manifest, output_dir } => rerun(manifest, output_dir.clone()),
        other => run(&to_config(other).expect("not a rerun")),
    }
}

/// Parses `args`, runs, reports on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            EXIT_OK
        }
        Err(e) => {
            match &e {
                CliError::Model(msg) => eprintln!("{msg}"),
                other => eprintln!("error: {other}"),
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon0_forms() {
        assert_eq!(parse_epsilon0("auto").unwrap(), Epsilon0::SmallestEigenvalue);
        assert_eq!(parse_epsilon0("10%").unwrap(), Epsilon0::FractionOfTop(0.1));
        assert_eq!(parse_epsilon0("0.5").unwrap(), Epsilon0::Absolute(0.5));
        assert!(parse_epsilon0("-1").is_err());
        assert!(parse_epsilon0("x%").is_err());
    }

    #[test]
    fn flags_reach_the_config() {
        let cli = Cli::try_parse_from([
            "spikeid", "window", "--input", "a.csv", "--window-ms", "1000", "--stride-ms", "250",
            "--stop-rule", "span", "--mc-samples", "3", "--dist", "t", "--seed", "7",
            "--noise-method", "threshold", "--global-noise", "--strict-pure-noise",
        ])
        .unwrap();
        let cfg = to_config(&cli.command).unwrap();
        assert_eq!(cfg.window.window_ms, 1000.0);
        assert_eq!(cfg.id.stop_rule, StopRule::Span);
        assert_eq!(cfg.id.discrepancy, Discrepancy::Spectrum { replicates: 3 });
        assert_eq!(cfg.id.dist, SamplingDist::T);
        assert_eq!((cfg.seed, cfg.id.seed), (7, 7));
        assert_eq!(cfg.noise_method, NoiseChoice::Threshold);
        assert!(cfg.window.global_noise && cfg.id.strict_pure_noise);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn snr_flags_repeat() {
        let cli = Cli::try_parse_from(["spikeid", "simulate", "--snr", "inf", "--snr", "0.1"]).unwrap();
        let cfg = to_config(&cli.command).unwrap();
        assert_eq!(cfg.snrs, vec![Snr(f64::INFINITY), Snr(0.1)]);
    }
}
