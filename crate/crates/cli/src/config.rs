//! Run configuration and the manifest written next to every output set.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use spikeid_core::simulator::{parse_snr, reference_dipoles, separated_dipoles, SensorSpec, SimulationConfig};
use spikeid_core::{Discrepancy, IdConfig, NoiseMethod, NoiseParams, StopRule};

use crate::error::{CliError, Result};
use crate::io::{format_number, write_atomic, DataFormat};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Compare,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    #[default]
    Fft,
    Residual,
    Threshold,
    /// No whitening at all.
    None,
    /// Identity noise covariance.
    Brute,
}

impl NoiseChoice {
    pub fn method(self) -> Option<NoiseMethod> {
        match self {
            NoiseChoice::Fft => Some(NoiseMethod::Fft),
            NoiseChoice::Residual => Some(NoiseMethod::Residual),
            NoiseChoice::Threshold => Some(NoiseMethod::Threshold),
            NoiseChoice::Brute => Some(NoiseMethod::Brute),
            NoiseChoice::None => None,
        }
    }
}

/// Dipole set used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The tabulated four-dipole configuration, imported literally.
    #[default]
    Reference,
    /// Four tangential dipoles at 50 mm, well apart.
    Separated,
}

/// A signal-to-noise ratio; infinity means noise-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub f64);

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            f.write_str(&format_number(self.0))
        }
    }
}

impl FromStr for Snr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_snr(s)?;
        if !(v > 0.0) {
            return Err(format!("SNR must be positive, got {s}"));
        }
        Ok(Snr(v))
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub fn default_snrs() -> Vec<Snr> {
    [f64::INFINITY, 1.0, 0.1, 0.01, 0.001, 0.0001].map(Snr).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    pub preset: Preset,
    pub n_sensors: usize,
    pub n_samples: usize,
    pub n_trials: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            preset: Preset::Reference,
            n_sensors: 128,
            n_samples: 1000,
            n_trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSettings {
    pub window_ms: f64,
    pub stride_ms: f64,
    /// Estimate the noise once on the full recording instead of per window.
    pub global_noise: bool,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            window_ms: 2000.0,
            stride_ms: 600.0,
            global_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    pub format: DataFormat,
    /// Not recorded in the manifest so reruns can target another directory.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub sample_period_ms: f64,
    pub noise_method: NoiseChoice,
    pub noise: NoiseParams,
    pub snrs: Vec<Snr>,
    pub simulation: SimulationSettings,
    pub window: WindowSettings,
    pub id: IdConfig,
    /// Master seed; every random stage derives its stream from it.
    pub seed: u64,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            format: DataFormat::Csv,
            output_dir: PathBuf::from("."),
            sample_period_ms: 1.0,
            noise_method: NoiseChoice::Fft,
            noise: NoiseParams::default(),
            snrs: default_snrs(),
            simulation: SimulationSettings::default(),
            window: WindowSettings::default(),
            id: IdConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.sample_period_ms.is_finite() && self.sample_period_ms > 0.0) {
            return bad(format!("sample period must be positive, got {}", self.sample_period_ms));
        }
        if self.id.seed != self.seed {
            return bad("estimator seed must equal the master seed".into());
        }
        let n_inputs = self.inputs.len();
        match self.command {
            Command::Estimate | Command::Window if n_inputs != 1 => {
                return bad(format!("expected exactly one --input, got {n_inputs}"))
            }
            Command::Simulate if n_inputs != 0 => return bad("simulate takes no --input".into()),
            _ => {}
        }
        if matches!(self.command, Command::Simulate | Command::Compare) && n_inputs == 0 {
            if self.snrs.is_empty() {
                return bad("need at least one --snr".into());
            }
            let s = &self.simulation;
            if s.n_sensors < 2 || s.n_samples < 2 || s.n_trials == 0 {
                return bad("simulation needs >= 2 sensors, >= 2 samples and >= 1 trial".into());
            }
        }
        if let StopRule::Fraction(p) = self.id.stop_rule {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("--fraction-p must lie in (0, 1], got {p}"));
            }
        }
        match self.id.discrepancy {
            Discrepancy::Spectrum { replicates: 0 } | Discrepancy::MeanVector { samples: 0 } => {
                return bad("--mc-samples must be positive".into())
            }
            _ => {}
        }
        if self.command == Command::Window {
            let w = &self.window;
            if !(w.window_ms.is_finite() && w.window_ms > 0.0) {
                return bad(format!("--window-ms must be positive, got {}", w.window_ms));
            }
            if !(w.stride_ms.is_finite() && w.stride_ms > 0.0) {
                return bad(format!("--stride-ms must be positive, got {}", w.stride_ms));
            }
            if w.stride_ms > w.window_ms {
                return bad(format!(
                    "stride {} ms exceeds window length {} ms",
                    w.stride_ms, w.window_ms
                ));
            }
        }
        Ok(())
    }

    pub fn simulation_config(&self, snr: Snr) -> SimulationConfig {
        let s = &self.simulation;
        let dipoles = match s.preset {
            Preset::Reference => reference_dipoles().0,
            Preset::Separated => separated_dipoles(),
        };
        SimulationConfig {
            dipoles,
            sensors: SensorSpec::Random { n: s.n_sensors },
            n_samples: s.n_samples,
            sample_period_ms: self.sample_period_ms,
            snr: snr.0,
            n_trials: s.n_trials,
            seed: self.seed,
            ..SimulationConfig::reference(snr.0, self.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config: RunConfig,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &RunConfig, outputs: Vec<String>) -> Self {
        Self {
            tool: "spikeid".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: config.seed,
            config: config.clone(),
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: invalid manifest: {e}", path.display())))
    }
}
