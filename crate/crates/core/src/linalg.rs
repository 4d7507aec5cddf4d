//! Recordings, covariance matrices and symmetric eigen-decomposition.
//!
//! Conventions used throughout the crate:
//!
//! * a recording is a `K x T` matrix, one row per channel;
//! * covariance estimates use the `1/T` divisor, so the aspect ratio
//!   `gamma = K/T` enters the spike estimator without correction;
//! * eigenvalues are sorted in descending order, and each eigenvector is
//!   signed so that its largest-magnitude entry is nonnegative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multichannel recording: `n_channels x n_samples` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    sample_period_ms: f64,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, sample_period_ms: f64) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::Data(format!(
                "recording must have at least 2 channels and 2 samples, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !(sample_period_ms.is_finite() && sample_period_ms > 0.0) {
            return Err(Error::Data(format!(
                "sample period must be positive, got {sample_period_ms}"
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let k = values.nrows();
            return Err(Error::Data(format!(
                "non-finite value {v} at channel {}, sample {}",
                i % k,
                i / k
            )));
        }
        Ok(Self {
            values,
            sample_period_ms,
        })
    }

    /// Builds a recording from channel rows (each row one channel).
    pub fn from_rows(rows: &[Vec<f64>], sample_period_ms: f64) -> Result<Self> {
        let k = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != t) {
            return Err(Error::dims(
                format!("{t} samples per channel"),
                format!("{} samples on channel {i}", r.len()),
            ));
        }
        Self::new(DMatrix::from_fn(k, t, |i, j| rows[i][j]), sample_period_ms)
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample_period_ms(&self) -> f64 {
        self.sample_period_ms
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Recording length in milliseconds.
    pub fn duration_ms(&self) -> f64 {
        self.n_samples() as f64 * self.sample_period_ms
    }

    pub fn channel_means(&self) -> DVector<f64> {
        self.values.column_mean()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.values * c, self.sample_period_ms)
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples() {
            return Err(Error::dims(
                format!("window end <= {}", self.n_samples()),
                start + len,
            ));
        }
        Self::new(
            self.values.columns(start, len).into_owned(),
            self.sample_period_ms,
        )
    }
}

/// A symmetric positive-semidefinite `K x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a square matrix, replacing it by its symmetric part.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::dims(
                "non-empty square matrix",
                format!("{}x{}", values.nrows(), values.ncols()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariance has non-finite entries".into()));
        }
        Ok(Self {
            values: symmetrize(values),
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            values: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diagonal().iter().copied().collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.values * c)
    }

    /// Operator 2-norm, i.e. the largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm_symmetric(&self.values)
    }

    /// `true` when every eigenvalue is at least `-rel_tol * lambda_max`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let eigs = symmetric_eigenvalues_desc(&self.values);
        let top = eigs.first().copied().unwrap_or(0.0).max(0.0);
        eigs.last().is_none_or(|&min| min >= -rel_tol * top)
    }
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues_vec(&self) -> Vec<f64> {
        self.eigenvalues.iter().copied().collect()
    }

    /// `Q diag(lambda) Q^T`.
    pub fn recompose(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(self.eigenvalues.iter()) {
            col *= l;
        }
        scaled * q.transpose()
    }
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// `(1/T) sum_t (y_t - ybar)(y_t - ybar)^T`, or the uncentered second moment.
pub fn sample_covariance(data: &DataMatrix, center: bool) -> Result<CovarianceMatrix> {
    let t = data.n_samples() as f64;
    let mut x = data.values().clone();
    if center {
        let mean = data.channel_means();
        for mut col in x.column_iter_mut() {
            col -= &mean;
        }
    }
    let gram = &x * x.transpose();
    CovarianceMatrix::new(gram / t)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let eigs = symmetric_eigenvalues_desc(m);
    let hi = eigs.first().copied().unwrap_or(0.0).abs();
    let lo = eigs.last().copied().unwrap_or(0.0).abs();
    hi.max(lo)
}

/// Eigenvalues of a symmetric matrix, descending. Skips eigenvector
/// accumulation, which is the expensive part for large `K`.
pub fn symmetric_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    eigs
}

const MAX_QR_ITERATIONS_PER_DIM: usize = 1_000;

/// Full symmetric eigen-decomposition with the crate's ordering and sign
/// conventions.
pub fn eigen_decompose(c: &CovarianceMatrix) -> Result<EigenDecomposition> {
    eigen_decompose_matrix(c.values())
}

pub(crate) fn eigen_decompose_matrix(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let dim = m.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(
        m.clone(),
        f64::EPSILON,
        MAX_QR_ITERATIONS_PER_DIM * dim.max(1),
    )
    .ok_or_else(|| Error::NoConvergence {
        dim,
        max_abs: m.camax(),
        frobenius: m.norm(),
    })?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Scale factor `phi(K)` applied after dividing by the spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    One,
    K,
    KSquared,
}

impl NormMode {
    pub fn phi(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            NormMode::One => 1.0,
            NormMode::K => k,
            NormMode::KSquared => k * k,
        }
    }
}

/// `phi(K) * C / ||C||_2`.
pub fn normalize_covariance(c: &CovarianceMatrix, mode: NormMode) -> Result<CovarianceMatrix> {
    let norm = c.spectral_norm();
    if norm <= 0.0 {
        return Err(Error::Degenerate(
            "cannot normalize a zero covariance matrix".into(),
        ));
    }
    c.scaled(mode.phi(c.dim()) / norm)
}

/// Rescales a recording by `sqrt(K / ||R||_2)` so its covariance has
/// spectral norm `K`.
pub fn normalize_data(data: &DataMatrix, rhat: &CovarianceMatrix) -> Result<DataMatrix> {
    if rhat.dim() != data.n_channels() {
        return Err(Error::dims(data.n_channels(), rhat.dim()));
    }
    let norm = rhat.spectral_norm();
    if norm <= 0.0 {
        return Err(Error::Degenerate(
            "cannot normalize data with a zero-norm covariance".into(),
        ));
    }
    data.scaled((data.n_channels() as f64 / norm).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, SamplingDist};
    use approx::assert_relative_eq;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.camax()
    }

    #[test]
    fn covariance_of_two_opposite_columns() {
        let d = DataMatrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 0.0]], 1.0).unwrap();
        let c = sample_covariance(&d, false).unwrap();
        assert_eq!(c.values(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_data_gives_zero_covariance() {
        let d = DataMatrix::new(DMatrix::zeros(3, 5), 1.0).unwrap();
        for center in [true, false] {
            assert!(sample_covariance(&d, center).unwrap().values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_non_finite_and_tiny_inputs() {
        let mut m = DMatrix::zeros(2, 3);
        m[(1, 2)] = f64::NAN;
        assert!(matches!(DataMatrix::new(m, 1.0), Err(Error::Data(_))));
        assert!(DataMatrix::new(DMatrix::zeros(1, 3), 1.0).is_err());
        assert!(DataMatrix::new(DMatrix::zeros(2, 1), 1.0).is_err());
    }

    #[test]
    fn diagonal_population_recovered_within_three_standard_errors() {
        let pop: [f64; 3] = [4.0, 1.0, 1.0];
        let t = 50;
        let mut rng = substream(3, "cov-test", 0);
        let z = SamplingDist::Gaussian.draw(&mut rng, 3 * t);
        let m = DMatrix::from_fn(3, t, |i, j| pop[i].sqrt() * z[j * 3 + i]);
        let c = sample_covariance(&DataMatrix::new(m, 1.0).unwrap(), true).unwrap();
        for (i, &p) in pop.iter().enumerate() {
            // var of a Gaussian sample variance is 2 sigma^4 / T
            let se = p * (2.0 / t as f64).sqrt();
            assert!((c.values()[(i, i)] - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn identity_and_diagonal_spectra() {
        let e = eigen_decompose(&CovarianceMatrix::identity(4)).unwrap();
        assert_eq!(e.eigenvalues_vec(), vec![1.0; 4]);

        let e = eigen_decompose(&CovarianceMatrix::from_diagonal(&[1.0, 3.0]).unwrap()).unwrap();
        assert_relative_eq!(e.eigenvalues[0], 3.0);
        assert_relative_eq!(e.eigenvalues[1], 1.0);
        assert_relative_eq!(e.eigenvectors.column(0).into_owned(), DVector::from_vec(vec![0.0, 1.0]));
        assert_relative_eq!(e.eigenvectors.column(1).into_owned(), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn random_spd_reconstruction_and_orthonormality() {
        let k = 50;
        let mut rng = substream(5, "spd", 0);
        let a = DMatrix::from_vec(k, k, SamplingDist::Gaussian.draw(&mut rng, k * k));
        let c = CovarianceMatrix::new(&a * a.transpose() + DMatrix::identity(k, k)).unwrap();
        let e = eigen_decompose(&c).unwrap();
        let resid = max_abs(&(e.recompose() - c.values()));
        assert!(resid <= 1e-8 * max_abs(c.values()), "residual {resid}");
        let ortho = &e.eigenvectors.transpose() * &e.eigenvectors - DMatrix::identity(k, k);
        assert!(max_abs(&ortho) <= 1e-8);
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        for col in e.eigenvectors.column_iter() {
            let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot >= 0.0);
        }
    }

    #[test]
    fn normalization_examples() {
        let c = normalize_covariance(&CovarianceMatrix::identity(4), NormMode::K).unwrap();
        assert_relative_eq!(c.values(), &(DMatrix::identity(4, 4) * 4.0), epsilon = 1e-14);

        let c = normalize_covariance(&CovarianceMatrix::from_diagonal(&[10.0, 5.0]).unwrap(), NormMode::K)
            .unwrap();
        assert_relative_eq!(c.values()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(c.values()[(1, 1)], 1.0, epsilon = 1e-14);

        let raw = CovarianceMatrix::from_diagonal(&[3.0, 0.5, 7.0]).unwrap();
        let one = normalize_covariance(&raw, NormMode::One).unwrap();
        assert_relative_eq!(one.spectral_norm(), 1.0, epsilon = 1e-12);

        assert!(matches!(
            normalize_covariance(&CovarianceMatrix::new(DMatrix::zeros(2, 2)).unwrap(), NormMode::One),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn normalize_data_scales_by_root_k_over_norm() {
        // R = diag(8, 2) from uncentered rows.
        let d = DataMatrix::from_rows(&[vec![2.0, -2.0, 2.0, -2.0], vec![1.0, 1.0, -1.0, -1.0]], 1.0)
            .unwrap();
        let r = CovarianceMatrix::from_diagonal(&[8.0, 2.0]).unwrap();
        let n = normalize_data(&d, &r).unwrap();
        assert_relative_eq!(n.values(), &(d.values() * 0.5), epsilon = 1e-15);

        let r_k = CovarianceMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
        assert_relative_eq!(normalize_data(&d, &r_k).unwrap().values(), d.values(), epsilon = 1e-15);
    }
}
