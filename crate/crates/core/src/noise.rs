//! Noise covariance estimators used to build the whitener.
//!
//! * `Fft`: per-channel periodogram averaged over the top frequency band,
//!   where a white noise floor dominates slow signals.
//! * `Residual`: per-channel autoregressive least-squares fit; the residual
//!   variance is the noise variance.
//! * `Threshold`: covariance of the autoregressive residuals with small
//!   off-diagonal entries hard-thresholded to zero.
//! * `Brute`: the identity, i.e. no whitening.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues_desc, CovarianceMatrix, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMethod {
    Fft,
    Residual,
    Threshold,
    Brute,
}

impl NoiseMethod {
    pub const ESTIMATORS: [NoiseMethod; 3] = [NoiseMethod::Fft, NoiseMethod::Residual, NoiseMethod::Threshold];

    pub fn name(self) -> &'static str {
        match self {
            NoiseMethod::Fft => "fft",
            NoiseMethod::Residual => "residual",
            NoiseMethod::Threshold => "threshold",
            NoiseMethod::Brute => "brute",
        }
    }
}

impl FromStr for NoiseMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(Self::Fft),
            "residual" => Ok(Self::Residual),
            "threshold" => Ok(Self::Threshold),
            "brute" => Ok(Self::Brute),
            other => Err(format!("unknown noise method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Fraction of the positive frequencies, counted down from Nyquist.
    pub band_fraction: f64,
    pub ar_order: usize,
    pub threshold_constant: f64,
    /// Optional `[start, end)` sample interval to estimate from.
    pub baseline: Option<(usize, usize)>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            band_fraction: 0.25,
            ar_order: 5,
            threshold_constant: 2.5,
            baseline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub covariance: CovarianceMatrix,
    pub method: NoiseMethod,
    /// Plain sample variance of every channel.
    pub channel_variances: Vec<f64>,
    /// Inverse residual variances (residual method only).
    pub inverse_variances: Option<Vec<f64>>,
    pub params: NoiseParams,
    pub warnings: Vec<String>,
}

pub fn estimate_noise(data: &DataMatrix, method: NoiseMethod, params: &NoiseParams) -> Result<NoiseEstimate> {
    let data = match params.baseline {
        Some((start, end)) if end > start => data.window(start, end - start)?,
        Some((start, end)) => {
            return Err(Error::Config(format!("empty baseline interval [{start}, {end})")))
        }
        None => data.clone(),
    };
    match method {
        NoiseMethod::Fft => estimate_noise_fft(&data, params.band_fraction),
        NoiseMethod::Residual => estimate_noise_residual(&data, params.ar_order),
        NoiseMethod::Threshold => {
            estimate_noise_threshold(&data, params.threshold_constant, params.ar_order)
        }
        NoiseMethod::Brute => Ok(NoiseEstimate {
            covariance: CovarianceMatrix::identity(data.n_channels()),
            method,
            channel_variances: channel_variances(&data),
            inverse_variances: None,
            params: params.clone(),
            warnings: Vec::new(),
        }),
    }
}

fn demeaned(row: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let v: Vec<f64> = row.collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - m).collect()
}

fn channel_rows(data: &DataMatrix) -> Vec<Vec<f64>> {
    data.values()
        .row_iter()
        .map(|r| demeaned(r.iter().copied()))
        .collect()
}

fn channel_variances(data: &DataMatrix) -> Vec<f64> {
    channel_rows(data)
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64)
        .collect()
}

/// Replaces values below `1e-12 * scale` by that floor.
fn apply_floor(values: &mut [f64], channel_vars: &[f64], warnings: &mut Vec<String>) -> Result<()> {
    let scale = values
        .iter()
        .chain(channel_vars)
        .fold(0.0f64, |m, &v| m.max(v));
    if scale <= 0.0 {
        return Err(Error::Degenerate("every channel is constant; noise variance is zero".into()));
    }
    let floor = 1e-12 * scale;
    for (i, v) in values.iter_mut().enumerate() {
        if !(*v >= floor) {
            warnings.push(format!("channel {i}: noise variance {v:e} floored to {floor:e}"));
            *v = floor;
        }
    }
    Ok(())
}

fn diagonal_estimate(
    mut diag: Vec<f64>,
    data: &DataMatrix,
    method: NoiseMethod,
    params: NoiseParams,
    mut warnings: Vec<String>,
) -> Result<NoiseEstimate> {
    let channel_variances = channel_variances(data);
    apply_floor(&mut diag, &channel_variances, &mut warnings)?;
    let inverse_variances = (method == NoiseMethod::Residual).then(|| diag.iter().map(|v| 1.0 / v).collect());
    Ok(NoiseEstimate {
        covariance: CovarianceMatrix::from_diagonal(&diag)?,
        method,
        channel_variances,
        inverse_variances,
        params,
        warnings,
    })
}

/// Mean periodogram power `|X_f|^2 / T` over the top `band_fraction` of the
/// positive frequencies of a demeaned series.
pub fn high_band_power(series: &[f64], band_fraction: f64, planner: &mut FftPlanner<f64>) -> f64 {
    let t = series.len();
    let fft = planner.plan_fft_forward(t);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let nyquist = t / 2;
    let lo = ((1.0 - band_fraction) * nyquist as f64).ceil().max(1.0) as usize;
    let band = &buf[lo..=nyquist];
    band.iter().map(|c| c.norm_sqr()).sum::<f64>() / (band.len() as f64 * t as f64)
}

pub fn estimate_noise_fft(data: &DataMatrix, band_fraction: f64) -> Result<NoiseEstimate> {
    if !(band_fraction > 0.0 && band_fraction <= 0.5) {
        return Err(Error::Config(format!("band fraction must lie in (0, 0.5], got {band_fraction}")));
    }
    if data.n_samples() < 16 {
        return Err(Error::Data(format!("FFT noise estimate needs T >= 16, got {}", data.n_samples())));
    }
    let mut planner = FftPlanner::new();
    let diag = channel_rows(data)
        .iter()
        .map(|r| high_band_power(r, band_fraction, &mut planner))
        .collect();
    let params = NoiseParams {
        band_fraction,
        ..NoiseParams::default()
    };
    diagonal_estimate(diag, data, NoiseMethod::Fft, params, Vec::new())
}

/// Least-squares AR(`order`) residuals of a demeaned series; `None` when the
/// regression is singular.
pub fn ar_residuals(series: &[f64], order: usize) -> Option<Vec<f64>> {
    if order == 0 {
        return Some(series.to_vec());
    }
    let n = series.len() - order;
    let x = DMatrix::from_fn(n, order, |i, j| series[order + i - 1 - j]);
    let y = DVector::from_column_slice(&series[order..]);
    let gram = x.transpose() * &x;
    let chol = gram.cholesky()?;
    let coef = chol.solve(&(x.transpose() * &y));
    let fitted = &x * coef;
    let r = y - fitted;
    if r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(r.iter().copied().collect())
}

fn residual_rows(data: &DataMatrix, order: usize, warnings: &mut Vec<String>) -> Result<Vec<Vec<f64>>> {
    if data.n_samples() <= 10 * order {
        return Err(Error::Config(format!(
            "AR order {order} needs T > {}, got {}",
            10 * order,
            data.n_samples()
        )));
    }
    let len = data.n_samples() - order;
    Ok(channel_rows(data)
        .iter()
        .enumerate()
        .map(|(i, r)| {
            ar_residuals(r, order).unwrap_or_else(|| {
                warnings.push(format!("channel {i}: singular AR regression"));
                vec![0.0; len]
            })
        })
        .collect())
}

pub fn estimate_noise_residual(data: &DataMatrix, ar_order: usize) -> Result<NoiseEstimate> {
    let mut warnings = Vec::new();
    let rows = residual_rows(data, ar_order, &mut warnings)?;
    let diag = rows
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64)
        .collect();
    let params = NoiseParams {
        ar_order,
        ..NoiseParams::default()
    };
    diagonal_estimate(diag, data, NoiseMethod::Residual, params, warnings)
}

/// Hard-thresholds the off-diagonal entries of a covariance estimated from
/// `n` samples at `c sqrt(log K / n) sqrt(s_ii s_jj)`, then shrinks the
/// surviving off-diagonals just enough to restore positive definiteness.
/// The diagonal is never modified.
pub fn threshold_covariance(s: &DMatrix<f64>, n: usize, c: f64) -> Result<(DMatrix<f64>, usize)> {
    let k = s.nrows();
    if !s.is_square() || k == 0 {
        return Err(Error::dims("non-empty square matrix", format!("{}x{}", s.nrows(), s.ncols())));
    }
    let level = c * ((k as f64).ln() / n as f64).sqrt();
    let mut out = s.clone();
    let mut kept = 0;
    for j in 0..k {
        for i in 0..k {
            if i != j {
                if s[(i, j)].abs() <= level * (s[(i, i)] * s[(j, j)]).sqrt() {
                    out[(i, j)] = 0.0;
                } else if i < j {
                    kept += 1;
                }
            }
        }
    }
    Ok((repair_psd(out), kept))
}

/// Scales off-diagonals by the largest `alpha` in `[0, 1]` (to bisection
/// precision) keeping the minimum eigenvalue at or above a small positive
/// floor.
fn repair_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let diag = DMatrix::from_diagonal(&m.diagonal());
    let off = &m - &diag;
    let dmin = m.diagonal().min();
    let floor = 1e-6 * dmin;
    let ok = |a: f64| {
        let e = symmetric_eigenvalues_desc(&(&diag + &off * a));
        e[e.len() - 1] >= floor
    };
    if off.iter().all(|&v| v == 0.0) || ok(1.0) {
        return m;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    &diag + off * lo
}

pub fn estimate_noise_threshold(data: &DataMatrix, threshold_constant: f64, ar_order: usize) -> Result<NoiseEstimate> {
    if !(threshold_constant.is_finite() && threshold_constant > 0.0) {
        return Err(Error::Config(format!(
            "threshold constant must be positive, got {threshold_constant}"
        )));
    }
    let mut warnings = Vec::new();
    let k = data.n_channels();
    if data.n_samples() * 4 < k {
        warnings.push(format!("T = {} is below K/4; thresholding is unreliable", data.n_samples()));
    }
    let rows = residual_rows(data, ar_order, &mut warnings)?;
    let n = rows[0].len();
    let e = DMatrix::from_fn(k, n, |i, j| rows[i][j]);
    let mut s = &e * e.transpose() / n as f64;
    let channel_variances = channel_variances(data);
    let mut diag: Vec<f64> = s.diagonal().iter().copied().collect();
    apply_floor(&mut diag, &channel_variances, &mut warnings)?;
    for (i, &d) in diag.iter().enumerate() {
        s[(i, i)] = d;
    }
    let (thresholded, kept) = threshold_covariance(&s, n, threshold_constant)?;
    if kept > 0 {
        warnings.push(format!("{kept} off-diagonal pair(s) survived thresholding"));
    }
    Ok(NoiseEstimate {
        covariance: CovarianceMatrix::new(thresholded)?,
        method: NoiseMethod::Threshold,
        channel_variances,
        inverse_variances: None,
        params: NoiseParams {
            ar_order,
            threshold_constant,
            ..NoiseParams::default()
        },
        warnings,
    })
}
