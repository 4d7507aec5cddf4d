//! Synthetic MEG recordings: current dipoles inside a spherical head seen by
//! radial magnetometers on the upper hemisphere of a 100 mm sphere.
//!
//! For a spherically symmetric conductor the volume currents produce no radial
//! field, so the radial component is the primary-current Biot–Savart term
//! alone and the shell conductivities never enter the computation.

use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DataMatrix;
use crate::rng::{substream, SamplingDist};

/// `mu_0 / 4 pi` expressed for nA·m moments, mm distances and fT output.
pub const FIELD_SCALE_FT: f64 = 1e5;

pub const SENSOR_RADIUS_MM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub radii_mm: [f64; 3],
    pub conductivities: [f64; 3],
}

impl Default for HeadModel {
    fn default() -> Self {
        Self {
            radii_mm: [88.0, 92.0, 100.0],
            conductivities: [1.0, 1.0 / 80.0, 1.0],
        }
    }
}

impl HeadModel {
    pub fn validate(&self) -> Result<()> {
        let r = self.radii_mm;
        if !(r[0] > 0.0 && r[0] < r[1] && r[1] < r[2]) {
            return Err(Error::Config(format!("head radii must be increasing, got {r:?}")));
        }
        if self.conductivities.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("conductivities must be positive".into()));
        }
        Ok(())
    }

    pub fn brain_radius(&self) -> f64 {
        self.radii_mm[0]
    }
}

/// `sin`/`cos` oscillation `f(2 pi freq t + phase)` with `t` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeCourse {
    pub cosine: bool,
    pub freq_hz: f64,
    pub phase: f64,
}

impl TimeCourse {
    pub fn value(&self, t_sec: f64) -> f64 {
        let arg = 2.0 * std::f64::consts::PI * self.freq_hz * t_sec + self.phase;
        if self.cosine {
            arg.cos()
        } else {
            arg.sin()
        }
    }

    /// The four standard courses: `sin 10 Hz`, `cos 15 Hz`,
    /// `sin(20 Hz, -pi/4)`, `cos(30 Hz, -pi/4)`.
    pub fn standard(index: usize) -> Result<Self> {
        let q = -std::f64::consts::FRAC_PI_4;
        let (cosine, freq_hz, phase) = match index {
            1 => (false, 10.0, 0.0),
            2 => (true, 15.0, 0.0),
            3 => (false, 20.0, q),
            4 => (true, 30.0, q),
            _ => return Err(Error::Config(format!("standard time courses are 1..=4, got {index}"))),
        };
        Ok(Self { cosine, freq_hz, phase })
    }
}

/// Standard course `index` (1..=4) evaluated at `t` seconds.
pub fn time_course(index: usize, t_sec: f64) -> Result<f64> {
    Ok(TimeCourse::standard(index)?.value(t_sec))
}

/// Raw tabulated parameters a dipole was imported from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
    pub m1: f64,
    pub m2: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    /// Cartesian position in mm.
    pub position: [f64; 3],
    /// Moment in nA·m.
    pub moment: [f64; 3],
    pub course: TimeCourse,
    pub table_params: Option<TableParams>,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Cartesian point for radius `r`, inclination `theta`, azimuth `phi`.
pub fn spherical(r: f64, theta: f64, phi: f64) -> [f64; 3] {
    [
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    ]
}

/// Unit tangent vectors `(e_theta, e_phi)` at inclination `theta`, azimuth `phi`.
pub fn tangent_basis(theta: f64, phi: f64) -> ([f64; 3], [f64; 3]) {
    (
        [theta.cos() * phi.cos(), theta.cos() * phi.sin(), -theta.sin()],
        [-phi.sin(), phi.cos(), 0.0],
    )
}

impl Dipole {
    pub fn new(position: [f64; 3], moment: [f64; 3], course: TimeCourse) -> Self {
        Self {
            position,
            moment,
            course,
            table_params: None,
        }
    }

    /// Imports one column of a dipole table.
    ///
    /// The position is `spherical(r, theta, phi)` taken literally, so a
    /// negative `r` reflects the point through the origin. The moment is
    /// `m1 e_theta + m2 e_phi`, scaled by `s` when `s > 0` and used as given
    /// (in nA·m) when `s = 0`. Angles are radians.
    pub fn from_table(p: TableParams, course: TimeCourse) -> (Self, Vec<String>) {
        let mut warnings = Vec::new();
        if p.r == 0.0 {
            warnings.push(
                "r = 0 places the dipole at the sphere centre, where its radial field vanishes".into(),
            );
        }
        if p.r < 0.0 {
            warnings.push(format!("negative radius {} reflects the dipole through the origin", p.r));
        }
        if p.s == 0.0 {
            warnings.push("strength s = 0; (m1, m2) used directly as the moment in nA·m".into());
        }
        let (et, ep) = tangent_basis(p.theta, p.phi);
        let scale = if p.s > 0.0 { p.s } else { 1.0 };
        let moment = [0, 1, 2].map(|i| scale * (p.m1 * et[i] + p.m2 * ep[i]));
        let dipole = Self {
            position: spherical(p.r, p.theta, p.phi),
            moment,
            course,
            table_params: Some(p),
        };
        (dipole, warnings)
    }

    pub fn validate(&self, head: &HeadModel) -> Result<()> {
        let r = v3(self.position).norm();
        if !(r < head.brain_radius()) {
            return Err(Error::Config(format!(
                "dipole at radius {r} mm lies outside the brain sphere ({} mm)",
                head.brain_radius()
            )));
        }
        if self.moment.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("dipole moment must be finite".into()));
        }
        Ok(())
    }
}

/// The four dipoles of the reference simulation table, with importer warnings.
pub fn reference_dipoles() -> (Vec<Dipole>, Vec<String>) {
    let rows = [
        (0.0, 0.5, 3.0, 1.0, 0.0, 0.0),
        (10.0, 0.1, 0.1, 0.0, 0.5, 0.5),
        (-10.0, -0.5, -0.3, 0.3, 0.4, 0.2),
        (40.0, -0.3, 0.3, 1.0, 0.7, 0.0),
    ];
    let mut dipoles = Vec::new();
    let mut warnings = Vec::new();
    for (i, &(r, phi, theta, m1, m2, s)) in rows.iter().enumerate() {
        let course = TimeCourse::standard(i + 1).expect("index in range");
        let (d, w) = Dipole::from_table(TableParams { r, phi, theta, m1, m2, s }, course);
        warnings.extend(w.into_iter().map(|w| format!("dipole {}: {w}", i + 1)));
        dipoles.push(d);
    }
    (dipoles, warnings)
}

/// Four well-separated dipoles at 50 mm with 10 nA·m tangential moments,
/// each comfortably above the noise floor of the reference array.
pub fn separated_dipoles() -> Vec<Dipole> {
    [(0.5, 0.3, 0.0), (0.6, 2.4, 1.0), (0.7, 4.3, 2.0), (0.4, 5.5, 0.5)]
        .iter()
        .enumerate()
        .map(|(i, &(theta, phi, a)): (usize, &(f64, f64, f64))| {
            let (et, ep) = tangent_basis(theta, phi);
            let moment = [0, 1, 2].map(|j| 10.0 * (a.cos() * et[j] + a.sin() * ep[j]));
            Dipole::new(
                spherical(50.0, theta, phi),
                moment,
                TimeCourse::standard(i + 1).expect("index in range"),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    /// Positions in mm.
    pub positions: Vec<[f64; 3]>,
    /// Unit radial orientations.
    pub orientations: Vec<[f64; 3]>,
}

impl SensorArray {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `n` points uniform on the upper hemisphere (`z >= 0`) of radius `radius`.
pub fn place_sensors(n: usize, radius: f64, seed: u64) -> Result<SensorArray> {
    if n == 0 {
        return Err(Error::Config("need at least one sensor".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("sensor radius must be positive, got {radius}")));
    }
    let mut rng = substream(seed, "sensors", 0);
    let mut positions = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    while positions.len() < n {
        let g = SamplingDist::Gaussian.draw(&mut rng, 3);
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let u = [g[0] / norm, g[1] / norm, (g[2] / norm).abs()];
        positions.push(u.map(|c| c * radius));
        orientations.push(u);
    }
    Ok(SensorArray {
        positions,
        orientations,
    })
}

/// Radial field (fT) of `dipole` at a sensor: `1e5 (q x d) . o / |d|^3` with
/// `d = p - r0`.
pub fn dipole_field_radial(dipole: &Dipole, position: [f64; 3], orientation: [f64; 3]) -> Result<f64> {
    let d = v3(position) - v3(dipole.position);
    let dist = d.norm();
    if dist < 1e-9 {
        return Err(Error::Degenerate("sensor coincides with the dipole".into()));
    }
    Ok(FIELD_SCALE_FT * v3(dipole.moment).cross(&d).dot(&v3(orientation)) / dist.powi(3))
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => super::parse_snr(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// Parses a signal-to-noise ratio; `inf`, `infinity` and `none` mean noise-free.
pub fn parse_snr(s: &str) -> std::result::Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "none" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("bad SNR '{s}': {e}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SensorSpec {
    Random { n: usize },
    Explicit(SensorArray),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dipoles: Vec<Dipole>,
    pub sensors: SensorSpec,
    pub head: HeadModel,
    pub n_samples: usize,
    pub sample_period_ms: f64,
    /// Per-channel signal-to-noise variance ratio; infinite disables noise.
    #[serde(with = "snr_serde")]
    pub snr: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl SimulationConfig {
    /// 128 random sensors, the reference dipole table, 1000 samples at 1 kHz,
    /// 5 trials.
    pub fn reference(snr: f64, seed: u64) -> Self {
        Self {
            dipoles: reference_dipoles().0,
            sensors: SensorSpec::Random { n: 128 },
            head: HeadModel::default(),
            n_samples: 1000,
            sample_period_ms: 1.0,
            snr,
            n_trials: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.dipoles.is_empty() {
            return Err(Error::Config("no dipoles configured".into()));
        }
        for d in &self.dipoles {
            d.validate(&self.head)?;
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("SNR must be positive, got {}", self.snr)));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("need at least 2 samples".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if !(self.sample_period_ms > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        Ok(())
    }

    pub fn sensor_array(&self) -> Result<SensorArray> {
        match &self.sensors {
            SensorSpec::Random { n } => place_sensors(*n, self.head.radii_mm[2], self.seed),
            SensorSpec::Explicit(a) => Ok(a.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// Trial average.
    pub averaged: DataMatrix,
    pub trials: Vec<DataMatrix>,
    pub clean: DataMatrix,
    pub n_dipoles: usize,
    pub sensors: SensorArray,
    /// Sensor x dipole gain matrix.
    pub gain: DMatrix<f64>,
    /// Injected per-trial noise variance of each channel.
    pub noise_variances: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let sensors = cfg.sensor_array()?;
    let k = sensors.len();
    if k < 2 {
        return Err(Error::Config("need at least 2 sensors".into()));
    }
    let (t, n_dip) = (cfg.n_samples, cfg.dipoles.len());
    let mut gain = DMatrix::zeros(k, n_dip);
    for (s, (p, o)) in sensors.positions.iter().zip(&sensors.orientations).enumerate() {
        for (j, d) in cfg.dipoles.iter().enumerate() {
            gain[(s, j)] = dipole_field_radial(d, *p, *o)?;
        }
    }
    let courses = DMatrix::from_fn(n_dip, t, |j, i| {
        let t_sec = (i + 1) as f64 * cfg.sample_period_ms / 1000.0;
        cfg.dipoles[j].course.value(t_sec)
    });
    let clean = &gain * courses;

    let mut warnings = Vec::new();
    let noise_variances: Vec<f64> = clean
        .row_iter()
        .enumerate()
        .map(|(c, row)| {
            if cfg.snr.is_infinite() {
                return 0.0;
            }
            let mean = row.mean();
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64;
            if var == 0.0 {
                warnings.push(format!("channel {c} carries no signal; its noise variance is 0"));
            }
            var / cfg.snr
        })
        .collect();

    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut sum = DMatrix::zeros(k, t);
    for trial in 0..cfg.n_trials {
        let mut y = clean.clone();
        if cfg.snr.is_finite() {
            let mut rng = substream(cfg.seed, "trial-noise", trial as u64);
            let z = SamplingDist::Gaussian.draw(&mut rng, k * t);
            for j in 0..t {
                for c in 0..k {
                    y[(c, j)] += noise_variances[c].sqrt() * z[j * k + c];
                }
            }
        }
        sum += &y;
        trials.push(DataMatrix::new(y, cfg.sample_period_ms)?);
    }
    Ok(SimulationOutput {
        averaged: DataMatrix::new(sum / cfg.n_trials as f64, cfg.sample_period_ms)?,
        trials,
        clean: DataMatrix::new(clean, cfg.sample_period_ms)?,
        n_dipoles: n_dip,
        sensors,
        gain,
        noise_variances,
        warnings,
    })
}

/// Draws a random tangential unit vector; handy for ad hoc dipole sets.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, theta: f64, phi: f64) -> [f64; 3] {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (et, ep) = tangent_basis(theta, phi);
    [0, 1, 2].map(|i| a.cos() * et[i] + a.sin() * ep[i])
}
