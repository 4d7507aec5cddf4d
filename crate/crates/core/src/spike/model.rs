//! Synthetic draws from the spiked population model
//! `Sigma = O^T diag(lambda_1 I_{m_1}, ..., lambda_L I_{m_L}, bulk I_{K-M}) O`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CovarianceMatrix, DataMatrix};
use crate::rng::{substream, SamplingDist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModelSpec {
    /// `(value, multiplicity)` pairs, strictly decreasing in value.
    pub spikes: Vec<(f64, usize)>,
    pub bulk_value: f64,
    pub dim: usize,
}

impl SpikedModelSpec {
    pub fn new(spikes: Vec<(f64, usize)>, dim: usize) -> Result<Self> {
        let spec = Self {
            spikes,
            bulk_value: 1.0,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bulk_value.is_finite() && self.bulk_value > 0.0) {
            return Err(Error::Config(format!("bulk value must be positive, got {}", self.bulk_value)));
        }
        for (i, &(v, m)) in self.spikes.iter().enumerate() {
            if !(v.is_finite() && v > self.bulk_value) {
                return Err(Error::Config(format!(
                    "spike {i} = {v} must exceed the bulk value {}",
                    self.bulk_value
                )));
            }
            if m == 0 {
                return Err(Error::Config(format!("spike {i} has zero multiplicity")));
            }
        }
        if self.spikes.windows(2).any(|w| w[0].0 <= w[1].0) {
            return Err(Error::Config("spike values must be strictly decreasing".into()));
        }
        if self.n_spiked() >= self.dim {
            return Err(Error::Config(format!(
                "total multiplicity {} must be below the dimension {}",
                self.n_spiked(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Total multiplicity `M`.
    pub fn n_spiked(&self) -> usize {
        self.spikes.iter().map(|s| s.1).sum()
    }

    /// Number of distinct spikes `L`.
    pub fn n_distinct(&self) -> usize {
        self.spikes.len()
    }

    /// Population eigenvalues in descending order.
    pub fn population_eigenvalues(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.dim);
        for &(v, m) in &self.spikes {
            d.extend(std::iter::repeat_n(v, m));
        }
        d.resize(self.dim, self.bulk_value);
        d
    }

    /// Smallest gap between adjacent spikes, if there are at least two.
    pub fn min_spike_gap(&self) -> Option<f64> {
        self.spikes
            .windows(2)
            .map(|w| w[0].0 - w[1].0)
            .min_by(f64::total_cmp)
    }
}

/// How the population eigenbasis is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    #[default]
    Identity,
    /// Haar-distributed orthogonal matrix.
    Haar,
}

/// Haar orthogonal matrix: QR of a Gaussian matrix with `diag(R) > 0`.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_vec(k, k, SamplingDist::Gaussian.draw(rng, k * k));
    let (mut q, r) = g.qr().unpack();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draws `T` zero-mean columns with the model's population covariance.
///
/// The innovation block is taken from the `"spiked-model"` substream and the
/// rotation from `"rotation"`, so the same seed with a different rotation
/// gives an orthogonally equivalent sample.
pub fn sample_spiked_model(
    spec: &SpikedModelSpec,
    t: usize,
    dist: SamplingDist,
    rotation: Rotation,
    seed: u64,
) -> Result<DataMatrix> {
    spec.validate()?;
    let k = spec.dim;
    let mut rng = substream(seed, "spiked-model", 0);
    let mut z = DMatrix::from_vec(k, t, dist.draw(&mut rng, k * t));
    for (mut row, d) in z.row_iter_mut().zip(spec.population_eigenvalues()) {
        row *= d.sqrt();
    }
    let y = match rotation {
        Rotation::Identity => z,
        Rotation::Haar => {
            let o = haar_orthogonal(&mut substream(seed, "rotation", 0), k);
            o.transpose() * z
        }
    };
    DataMatrix::new(y, 1.0)
}

/// Lower-triangular Bartlett factor of a white Wishart matrix with `dof`
/// degrees of freedom: `A A^T ~ W_K(I, dof)`.
pub fn bartlett_factor<R: Rng + ?Sized>(rng: &mut R, k: usize, dof: usize) -> Result<DMatrix<f64>> {
    if dof < k {
        return Err(Error::Config(format!(
            "Bartlett sampling needs dof >= dim, got dof {dof} for dim {k}"
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new((dof - i) as f64).map_err(|e| Error::Config(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    Ok(a)
}

/// Exact draw of the Gaussian sample covariance `(1/T) Y Y^T` for the model,
/// without materializing the `K x T` data. With `center`, the degrees of
/// freedom drop to `T - 1` while the divisor stays `T`.
///
/// Only the identity rotation is produced; spectra are rotation invariant.
pub fn sample_spiked_covariance(
    spec: &SpikedModelSpec,
    t: usize,
    center: bool,
    seed: u64,
) -> Result<CovarianceMatrix> {
    spec.validate()?;
    let k = spec.dim;
    let dof = if center { t.saturating_sub(1) } else { t };
    let a = bartlett_factor(&mut substream(seed, "spiked-covariance", 0), k, dof)?;
    let mut w = &a * a.transpose();
    let root: Vec<f64> = spec.population_eigenvalues().iter().map(|d| d.sqrt()).collect();
    for j in 0..k {
        for i in 0..k {
            w[(i, j)] *= root[i] * root[j] / t as f64;
        }
    }
    CovarianceMatrix::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_covariance, symmetric_eigenvalues_desc};
    use crate::spike::estimate::mp_edges;

    #[test]
    fn spec_validation() {
        assert!(SpikedModelSpec::new(vec![(5.0, 2), (3.0, 1)], 10).is_ok());
        assert!(SpikedModelSpec::new(vec![(3.0, 2), (5.0, 1)], 10).is_err());
        assert!(SpikedModelSpec::new(vec![(5.0, 10)], 10).is_err());
        assert!(SpikedModelSpec::new(vec![(0.5, 1)], 10).is_err());
        let s = SpikedModelSpec::new(vec![(5.0, 2), (3.0, 1)], 5).unwrap();
        assert_eq!(s.population_eigenvalues(), vec![5.0, 5.0, 3.0, 1.0, 1.0]);
        assert_eq!(s.min_spike_gap(), Some(2.0));
    }

    #[test]
    fn null_spectrum_stays_inside_mp_support() {
        let (k, t) = (60, 1200);
        let spec = SpikedModelSpec::new(vec![], k).unwrap();
        let (a, b) = mp_edges(k as f64 / t as f64, 1.0).unwrap();
        let mut inside = 0;
        for seed in 0..20 {
            let y = sample_spiked_model(&spec, t, SamplingDist::Gaussian, Rotation::Identity, seed).unwrap();
            let e = symmetric_eigenvalues_desc(sample_covariance(&y, true).unwrap().values());
            if e[0] <= b + 0.1 && e[k - 1] >= a - 0.1 {
                inside += 1;
            }
        }
        assert!(inside >= 19, "{inside}/20");
    }

    #[test]
    fn rotation_leaves_spectrum_unchanged() {
        let spec = SpikedModelSpec::new(vec![(6.0, 2), (3.0, 3)], 20).unwrap();
        let spectra: Vec<Vec<f64>> = [Rotation::Identity, Rotation::Haar]
            .iter()
            .map(|&rot| {
                let y = sample_spiked_model(&spec, 200, SamplingDist::Gaussian, rot, 17).unwrap();
                symmetric_eigenvalues_desc(sample_covariance(&y, false).unwrap().values())
            })
            .collect();
        for (a, b) in spectra[0].iter().zip(&spectra[1]) {
            assert!((a - b).abs() <= 1e-8 * spectra[0][0]);
        }
    }

    #[test]
    fn top_sample_eigenvalue_is_pushed_out_of_the_bulk() {
        let spec = SpikedModelSpec::new(vec![(20.0, 20), (17.0, 10), (10.0, 40), (7.0, 30)], 300).unwrap();
        let y = sample_spiked_model(&spec, 6000, SamplingDist::Gaussian, Rotation::Identity, 1).unwrap();
        let e = symmetric_eigenvalues_desc(sample_covariance(&y, true).unwrap().values());
        let gamma = 0.05;
        let (_, b) = mp_edges(gamma, 1.0).unwrap();
        // The spike location is roughly lambda (1 + gamma / (lambda - 1)); multiplicity widens it.
        let loc = 20.0 * (1.0 + gamma / 19.0);
        assert!(e[0] > b);
        assert!((e[0] - loc).abs() < 0.15 * loc, "{} vs {loc}", e[0]);
    }

    #[test]
    fn bartlett_matches_direct_sampling_in_mean() {
        let spec = SpikedModelSpec::new(vec![(4.0, 1)], 5).unwrap();
        let reps = 400;
        let mut acc = DMatrix::zeros(5, 5);
        for seed in 0..reps {
            acc += sample_spiked_covariance(&spec, 50, false, seed).unwrap().values();
        }
        acc /= reps as f64;
        // E[W/T] = Sigma
        let pop = spec.population_eigenvalues();
        for i in 0..5 {
            assert!((acc[(i, i)] - pop[i]).abs() < 0.1 * pop[i], "{}", acc[(i, i)]);
        }
        assert!(acc[(0, 1)].abs() < 0.1);
    }
}
