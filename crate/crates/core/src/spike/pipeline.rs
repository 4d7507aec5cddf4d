//! End-to-end intrinsic dimensionality: whiten, decompose, learn thresholds,
//! group and estimate.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::estimate::{estimate_bulk, estimate_spike_group, group_eigenvalues, group_mean};
use super::thresholds::{choose_delta, choose_epsilon, Discrepancy, EpsilonSearch, StopRule};
use crate::error::{Error, Result};
use crate::linalg::{
    normalize_covariance, sample_covariance, symmetric_eigenvalues_desc, CovarianceMatrix,
    DataMatrix, NormMode,
};
use crate::rng::SamplingDist;
use crate::snr::{adjusted_covariance, whitener_from_noise, DEFAULT_EIG_FLOOR};

/// Step of the epsilon grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Epsilon0 {
    /// The smallest sample eigenvalue, or `1e-3 * lambda_1` if that is
    /// smaller (rank-deficient spectra).
    #[default]
    SmallestEigenvalue,
    FractionOfTop(f64),
    Absolute(f64),
}

/// Exclusion radius inside the spike estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EpsilonPrime {
    FractionOfTop(f64),
    Absolute(f64),
}

impl Default for EpsilonPrime {
    fn default() -> Self {
        EpsilonPrime::FractionOfTop(0.01)
    }
}

const MIN_EPSILON0_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdConfig {
    pub center: bool,
    /// Rescale both covariances before whitening.
    pub normalize: Option<NormMode>,
    pub epsilon0: Epsilon0,
    pub epsilon_prime: EpsilonPrime,
    /// Fixed bulk cut; learned from the spectrum when `None`.
    pub delta: Option<f64>,
    pub stop_rule: StopRule,
    pub discrepancy: Discrepancy,
    pub dist: SamplingDist,
    pub require_spike_gap: bool,
    pub max_candidates: usize,
    /// Surface the model-failure error on spectra without a spike gap
    /// instead of reporting `L = 0`.
    pub strict_pure_noise: bool,
    pub eig_floor: f64,
    pub seed: u64,
}

impl Default for IdConfig {
    fn default() -> Self {
        Self {
            center: true,
            normalize: None,
            epsilon0: Epsilon0::default(),
            epsilon_prime: EpsilonPrime::default(),
            delta: None,
            stop_rule: StopRule::default(),
            discrepancy: Discrepancy::default(),
            dist: SamplingDist::Gaussian,
            require_spike_gap: true,
            max_candidates: 10_000,
            strict_pure_noise: false,
            eig_floor: DEFAULT_EIG_FLOOR,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub delta: f64,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub epsilon_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdReport {
    /// Intrinsic dimensionality: the number of distinct estimated spikes.
    pub l: usize,
    pub estimated_spikes: Vec<f64>,
    pub groups: Vec<Range<usize>>,
    pub group_means: Vec<f64>,
    pub bulk_estimate: f64,
    pub thresholds: Thresholds,
    pub gamma_t: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    pub epsilon_candidates: Vec<f64>,
    /// Discrepancy per candidate; `NaN` where estimation failed.
    pub discrepancy_trace: Vec<f64>,
    pub sample_eigenvalues: Vec<f64>,
    pub whitened: bool,
    pub floor_applied: bool,
    pub warnings: Vec<String>,
}

impl IdReport {
    /// Group index for each sample eigenvalue, `None` for the bulk.
    pub fn group_of(&self, rank: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&rank))
    }
}

/// Runs the estimator on a recording, whitening with `noise` when given.
pub fn intrinsic_dimensionality(
    data: &DataMatrix,
    noise: Option<&CovarianceMatrix>,
    cfg: &IdConfig,
) -> Result<IdReport> {
    let rhat = sample_covariance(data, cfg.center)?;
    let mean: Vec<f64> = data.channel_means().iter().copied().collect();
    intrinsic_dimensionality_from_covariance(&rhat, noise, data.n_samples(), Some(&mean), cfg)
}

/// Same as [`intrinsic_dimensionality`] starting from a covariance estimate
/// built from `n_samples` observations.
pub fn intrinsic_dimensionality_from_covariance(
    rhat: &CovarianceMatrix,
    noise: Option<&CovarianceMatrix>,
    n_samples: usize,
    data_mean: Option<&[f64]>,
    cfg: &IdConfig,
) -> Result<IdReport> {
    let k = rhat.dim();
    let mut warnings = Vec::new();
    let (rhat, noise) = match cfg.normalize {
        None => (rhat.clone(), noise.cloned()),
        Some(mode) => {
            let norm = rhat.spectral_norm();
            let r = normalize_covariance(rhat, mode)?;
            let scale = mode.phi(k) / norm;
            (r, noise.map(|n| n.scaled(scale)).transpose()?)
        }
    };
    let (adj, whitened, floor_applied) = match &noise {
        Some(rn) => {
            if rn.dim() != k {
                return Err(Error::dims(k, rn.dim()));
            }
            let w = whitener_from_noise(rn, cfg.eig_floor)?;
            if w.floor_applied {
                warnings.push("noise covariance eigenvalues were floored before whitening".into());
            }
            (adjusted_covariance(&rhat, &w)?.matrix, true, w.floor_applied)
        }
        None => (rhat, false, false),
    };
    let eigs = symmetric_eigenvalues_desc(adj.values());
    let mut report = identify_from_spectrum(&eigs, n_samples, data_mean, cfg)?;
    report.whitened = whitened;
    report.floor_applied = floor_applied;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok(report)
}

fn resolve_epsilon0(eigs: &[f64], cfg: &IdConfig, warnings: &mut Vec<String>) -> Result<f64> {
    let top = eigs[0];
    let e0 = match cfg.epsilon0 {
        Epsilon0::SmallestEigenvalue => {
            let low = eigs[eigs.len() - 1];
            if low <= MIN_EPSILON0_FRACTION * top {
                warnings.push(format!(
                    "smallest eigenvalue {low:.4e} is below {MIN_EPSILON0_FRACTION} * lambda_1; epsilon0 raised to {:.4e}",
                    MIN_EPSILON0_FRACTION * top
                ));
                MIN_EPSILON0_FRACTION * top
            } else {
                low
            }
        }
        Epsilon0::FractionOfTop(f) => f * top,
        Epsilon0::Absolute(v) => v,
    };
    if !(e0.is_finite() && e0 > 0.0) {
        return Err(Error::Config(format!("epsilon0 resolved to {e0}, must be positive")));
    }
    Ok(e0)
}

/// Core of the pipeline on a descending spectrum of the (whitened)
/// covariance.
pub fn identify_from_spectrum(
    eigs: &[f64],
    n_samples: usize,
    data_mean: Option<&[f64]>,
    cfg: &IdConfig,
) -> Result<IdReport> {
    let k = eigs.len();
    if k < 2 {
        return Err(Error::Data("need at least two eigenvalues".into()));
    }
    if n_samples <= k {
        return Err(Error::Config(format!(
            "the estimator needs more samples than channels (K = {k}, T = {n_samples})"
        )));
    }
    if !(eigs[0] > 0.0) {
        return Err(Error::Degenerate("spectrum has no positive eigenvalue".into()));
    }
    let gamma_t = k as f64 / n_samples as f64;
    let mut warnings = Vec::new();
    let epsilon0 = resolve_epsilon0(eigs, cfg, &mut warnings)?;
    let epsilon_prime = match cfg.epsilon_prime {
        EpsilonPrime::FractionOfTop(f) => f * eigs[0],
        EpsilonPrime::Absolute(v) => v,
    };
    if !(epsilon_prime.is_finite() && epsilon_prime >= 0.0) {
        return Err(Error::Config(format!("epsilon' must be nonnegative, got {epsilon_prime}")));
    }

    let delta = match cfg.delta {
        Some(d) => d,
        None => match choose_delta(eigs, epsilon0) {
            Ok(d) => d,
            Err(Error::ModelNotApplicable) if !cfg.strict_pure_noise => {
                warnings.push(format!(
                    "{}; reporting L = 0",
                    crate::error::MODEL_NOT_APPLICABLE
                ));
                let bulk = eigs.iter().sum::<f64>() / k as f64;
                return Ok(IdReport {
                    l: 0,
                    estimated_spikes: Vec::new(),
                    groups: Vec::new(),
                    group_means: Vec::new(),
                    bulk_estimate: bulk,
                    thresholds: Thresholds {
                        delta: eigs[0],
                        epsilon: epsilon0,
                        epsilon0,
                        epsilon_prime,
                    },
                    gamma_t,
                    n_channels: k,
                    n_samples,
                    epsilon_candidates: Vec::new(),
                    discrepancy_trace: Vec::new(),
                    sample_eigenvalues: eigs.to_vec(),
                    whitened: false,
                    floor_applied: false,
                    warnings,
                });
            }
            Err(e) => return Err(e),
        },
    };

    let search = EpsilonSearch {
        epsilon0,
        epsilon_prime,
        n_samples,
        centered: cfg.center,
        stop_rule: cfg.stop_rule,
        discrepancy: cfg.discrepancy,
        dist: cfg.dist,
        require_spike_gap: cfg.require_spike_gap,
        max_candidates: cfg.max_candidates,
        seed: cfg.seed,
    };
    let choice = choose_epsilon(eigs, delta, data_mean, &search)?;
    warnings.extend(choice.warnings.iter().cloned());
    let epsilon = choice.epsilon;

    let groups = group_eigenvalues(eigs, delta, epsilon)?;
    let estimated_spikes = groups
        .iter()
        .map(|g| estimate_spike_group(eigs, g, n_samples, k, epsilon_prime))
        .collect::<Result<Vec<f64>>>()?;
    let group_means = groups.iter().map(|g| group_mean(eigs, g)).collect();
    let bulk_estimate = estimate_bulk(eigs, delta)?;

    if let Some(&last) = estimated_spikes.last() {
        if last - bulk_estimate <= gamma_t.sqrt() {
            warnings.push(format!(
                "spike/bulk gap {:.4} does not exceed sqrt(K/T) = {:.4}",
                last - bulk_estimate,
                gamma_t.sqrt()
            ));
        }
    }
    if let Some(w) = estimated_spikes.windows(2).find(|w| w[0] - w[1] < epsilon0) {
        warnings.push(format!(
            "adjacent spike estimates {:.4} and {:.4} are closer than epsilon0 = {epsilon0:.4}",
            w[0], w[1]
        ));
    }
    if let Some(e) = estimated_spikes.iter().find(|&&e| e <= bulk_estimate) {
        warnings.push(format!("spike estimate {e:.4} does not exceed the bulk estimate"));
    }

    Ok(IdReport {
        l: groups.len(),
        estimated_spikes,
        groups,
        group_means,
        bulk_estimate,
        thresholds: Thresholds {
            delta,
            epsilon,
            epsilon0,
            epsilon_prime,
        },
        gamma_t,
        n_channels: k,
        n_samples,
        epsilon_candidates: choice.candidates.iter().map(|c| c.epsilon).collect(),
        discrepancy_trace: choice.trace(),
        sample_eigenvalues: eigs.to_vec(),
        whitened: false,
        floor_applied: false,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::model::{sample_spiked_model, Rotation, SpikedModelSpec};

    #[test]
    fn population_matrices_give_exact_count() {
        // R_adj = diag(9, 9, 4, 1, ..., 1): two distinct spikes.
        let mut d = vec![1.0; 30];
        d[0] = 9.0;
        d[1] = 9.0;
        d[2] = 4.0;
        let r = CovarianceMatrix::from_diagonal(&d).unwrap();
        let rep = intrinsic_dimensionality_from_covariance(&r, None, 1_000_000, None, &IdConfig::default())
            .unwrap();
        assert_eq!(rep.l, 2);
        assert!((rep.estimated_spikes[0] - 9.0).abs() < 0.01);
        assert!((rep.bulk_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn whitening_changes_the_spectrum_before_counting() {
        let rn = CovarianceMatrix::from_diagonal(&(1..=20).map(f64::from).collect::<Vec<_>>()).unwrap();
        let mut r = rn.values().clone();
        r[(0, 0)] += 30.0;
        let r = CovarianceMatrix::new(r).unwrap();
        let rep = intrinsic_dimensionality_from_covariance(&r, Some(&rn), 1_000_000, None, &IdConfig::default())
            .unwrap();
        assert!(rep.whitened);
        assert_eq!(rep.l, 1);
        assert!((rep.estimated_spikes[0] - 31.0).abs() < 0.1);
    }

    #[test]
    fn pure_noise_modes() {
        let spec = SpikedModelSpec::new(vec![], 40).unwrap();
        let y = sample_spiked_model(&spec, 2000, SamplingDist::Gaussian, Rotation::Identity, 4).unwrap();
        let lenient = intrinsic_dimensionality(&y, None, &IdConfig::default()).unwrap();
        assert_eq!(lenient.l, 0);
        assert!(!lenient.warnings.is_empty());
        let strict = IdConfig {
            strict_pure_noise: true,
            ..IdConfig::default()
        };
        assert_eq!(
            intrinsic_dimensionality(&y, None, &strict).unwrap_err(),
            Error::ModelNotApplicable
        );
    }

    #[test]
    fn too_few_samples_is_a_config_error() {
        let r = CovarianceMatrix::identity(5);
        assert!(matches!(
            intrinsic_dimensionality_from_covariance(&r, None, 5, None, &IdConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
