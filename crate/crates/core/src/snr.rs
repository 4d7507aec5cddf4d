//! Noise whitening and the SNR rescaling functional
//! `I(X) = ||X^T R X||_2 / ||X^T R_n X||_2`.
//!
//! The functional is maximized in closed form by `W_n = Phi_n Lambda_n^{-1/2}`,
//! whose associated covariance `W_n^T R W_n` has the maximal eigenvalue as
//! its spectral norm. Pipelines only ever build that matrix; nothing here
//! searches over `X`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    eigen_decompose, spectral_norm_symmetric, symmetric_eigenvalues_desc, symmetrize,
    CovarianceMatrix,
};
use crate::rng::{substream, SamplingDist};

/// Relative eigenvalue floor used when the caller has no preference.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

/// `W_n = Phi_n Lambda_n^{-1/2}` built from a noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningOperator {
    pub matrix: DMatrix<f64>,
    /// Noise eigenvalues (descending) after flooring.
    pub noise_eigs: Vec<f64>,
    pub noise_eigvecs: DMatrix<f64>,
    pub floor_applied: bool,
}

impl WhiteningOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The no-op transform, used when noise is negligible.
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            noise_eigs: vec![1.0; dim],
            noise_eigvecs: DMatrix::identity(dim, dim),
            floor_applied: false,
        }
    }
}

/// `W^T R W` together with the flag of the whitener it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedCovariance {
    pub matrix: CovarianceMatrix,
    pub whitener_floor_applied: bool,
}

pub fn whitener_from_noise(rn: &CovarianceMatrix, eig_floor: f64) -> Result<WhiteningOperator> {
    if !(eig_floor.is_finite() && eig_floor >= 0.0) {
        return Err(Error::Config(format!(
            "eigenvalue floor must be nonnegative, got {eig_floor}"
        )));
    }
    if rn.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("noise covariance is the zero matrix".into()));
    }
    let eig = eigen_decompose(rn)?;
    let top = eig.eigenvalues[0];
    if top <= 0.0 {
        return Err(Error::Degenerate(
            "noise covariance has no positive eigenvalue".into(),
        ));
    }
    let floor = eig_floor * top;
    let mut floor_applied = false;
    let mut noise_eigs = Vec::with_capacity(rn.dim());
    for &l in eig.eigenvalues.iter() {
        if l < floor || l <= 0.0 {
            if floor <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "noise covariance is singular (eigenvalue {l:e}) and no floor is set"
                )));
            }
            floor_applied = true;
            noise_eigs.push(floor);
        } else {
            noise_eigs.push(l);
        }
    }
    let mut matrix = eig.eigenvectors.clone();
    for (mut col, &l) in matrix.column_iter_mut().zip(&noise_eigs) {
        col /= l.sqrt();
    }
    Ok(WhiteningOperator {
        matrix,
        noise_eigs,
        noise_eigvecs: eig.eigenvectors,
        floor_applied,
    })
}

pub fn adjusted_covariance(r: &CovarianceMatrix, w: &WhiteningOperator) -> Result<AdjustedCovariance> {
    if r.dim() != w.dim() {
        return Err(Error::dims(w.dim(), r.dim()));
    }
    let m = w.matrix.transpose() * r.values() * &w.matrix;
    Ok(AdjustedCovariance {
        matrix: CovarianceMatrix::new(m)?,
        whitener_floor_applied: w.floor_applied,
    })
}

fn congruence_norm(x: &DMatrix<f64>, c: &CovarianceMatrix) -> f64 {
    spectral_norm_symmetric(&symmetrize(x.transpose() * c.values() * x))
}

pub fn snr_functional(x: &DMatrix<f64>, r: &CovarianceMatrix, rn: &CovarianceMatrix) -> Result<f64> {
    if x.nrows() != r.dim() || r.dim() != rn.dim() {
        return Err(Error::dims(
            format!("X with {} rows", r.dim()),
            format!("X {}x{}, R_n {}", x.nrows(), x.ncols(), rn.dim()),
        ));
    }
    let den = congruence_norm(x, rn);
    if den < 1e-300 {
        return Err(Error::Degenerate(format!(
            "noise term of the SNR functional vanishes ({den:e})"
        )));
    }
    Ok(congruence_norm(x, r) / den)
}

/// Both closed-form maximizers of the SNR functional and the maximum itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityReport {
    /// Largest eigenvalue of `W_n^T R W_n`.
    pub lambda_max: f64,
    /// Functional at `W_n`.
    pub snr_whitener: f64,
    /// Functional at `W_n Phi_adj`.
    pub snr_rotated: f64,
}

impl OptimalityReport {
    pub fn max_rel_error(&self) -> f64 {
        let a = (self.snr_whitener - self.lambda_max).abs();
        let b = (self.snr_rotated - self.lambda_max).abs();
        a.max(b) / self.lambda_max
    }
}

pub fn verify_whitener_optimality(r: &CovarianceMatrix, rn: &CovarianceMatrix) -> Result<OptimalityReport> {
    let w = whitener_from_noise(rn, 0.0)?;
    let radj = adjusted_covariance(r, &w)?;
    let adj_eig = eigen_decompose(&radj.matrix)?;
    let lambda_max = adj_eig.eigenvalues[0];
    if lambda_max <= 0.0 {
        return Err(Error::Degenerate("R is singular along every whitened direction".into()));
    }
    let rotated = &w.matrix * &adj_eig.eigenvectors;
    Ok(OptimalityReport {
        lambda_max,
        snr_whitener: snr_functional(&w.matrix, r, rn)?,
        snr_rotated: snr_functional(&rotated, r, rn)?,
    })
}

/// Deviation of the associated covariance when the whitener's eigenvectors and
/// inverse root eigenvalues are each perturbed by a fixed random direction of
/// size `omega`.
///
/// The eigenvector perturbation is re-orthonormalized by QR with the sign of
/// `diag(R)` fixed positive, so `omega = 0` reproduces `Phi_n` exactly and the
/// returned deviation is exactly zero. Deviations use the spectral norm.
pub fn perturbation_curve(
    r: &CovarianceMatrix,
    rn: &CovarianceMatrix,
    omegas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if omegas.is_empty() {
        return Err(Error::Config("perturbation curve needs at least one omega".into()));
    }
    if let Some(w) = omegas.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Config(format!("omega must be nonnegative, got {w}")));
    }
    if r.dim() != rn.dim() {
        return Err(Error::dims(rn.dim(), r.dim()));
    }
    let k = r.dim();
    let w = whitener_from_noise(rn, 0.0)?;
    let phi = &w.noise_eigvecs;
    let inv_root = DVector::from_iterator(k, w.noise_eigs.iter().map(|l| 1.0 / l.sqrt()));
    let exact = w.matrix.transpose() * r.values() * &w.matrix;

    let mut rng = substream(seed, "perturbation", 0);
    let mut e = DMatrix::from_vec(k, k, SamplingDist::Gaussian.draw(&mut rng, k * k));
    e /= e.norm();
    let mut d = DVector::from_iterator(k, (0..k).map(|_| rng.random_range(-1.0..1.0)));
    d /= d.amax();

    let mut out = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        if omega == 0.0 {
            out.push((0.0, 0.0));
            continue;
        }
        let qr = (phi + &e * omega).qr();
        let (mut q, rr) = qr.unpack();
        for j in 0..k {
            if rr[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let scale = &inv_root + &d * omega;
        let mut w_hat = q;
        for (mut col, &s) in w_hat.column_iter_mut().zip(scale.iter()) {
            col *= s;
        }
        let approx = w_hat.transpose() * r.values() * &w_hat;
        out.push((omega, spectral_norm_symmetric(&symmetrize(approx - &exact))));
    }
    Ok(out)
}

/// Least-squares slope of `log(dev)` against `log(omega)` over the points
/// with both coordinates positive.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(w, d)| *w > 0.0 && *d > 0.0)
        .map(|(w, d)| (w.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("slope needs two positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all omegas are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Eigenvalues of the associated covariance, descending.
pub fn adjusted_spectrum(adj: &AdjustedCovariance) -> Vec<f64> {
    symmetric_eigenvalues_desc(adj.matrix.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> CovarianceMatrix {
        CovarianceMatrix::from_diagonal(v).unwrap()
    }

    fn random_spd(k: usize, seed: u64, label: &str) -> CovarianceMatrix {
        let mut rng = substream(seed, label, 0);
        let a = DMatrix::from_vec(k, k, SamplingDist::Gaussian.draw(&mut rng, k * k));
        CovarianceMatrix::new(&a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.1).unwrap()
    }

    #[test]
    fn functional_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert_relative_eq!(
            snr_functional(&i2, &CovarianceMatrix::identity(2).scaled(2.0).unwrap(), &CovarianceMatrix::identity(2))
                .unwrap(),
            2.0
        );
        let w = whitener_from_noise(&diag(&[1.0, 4.0]), 0.0).unwrap();
        assert_relative_eq!(
            snr_functional(&w.matrix, &diag(&[2.0, 4.0]), &diag(&[1.0, 4.0])).unwrap(),
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn functional_is_unitary_invariant() {
        let r = random_spd(6, 1, "r");
        let rn = random_spd(6, 2, "rn");
        let u = eigen_decompose(&random_spd(6, 3, "u")).unwrap().eigenvectors;
        let base = snr_functional(&DMatrix::identity(6, 6), &r, &rn).unwrap();
        assert_relative_eq!(snr_functional(&u, &r, &rn).unwrap(), base, max_relative = 1e-12);
    }

    #[test]
    fn zero_noise_term_is_rejected() {
        let x = DMatrix::zeros(2, 2);
        let c = CovarianceMatrix::identity(2);
        assert!(matches!(snr_functional(&x, &c, &c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn whitener_examples() {
        let w = whitener_from_noise(&CovarianceMatrix::identity(3), DEFAULT_EIG_FLOOR).unwrap();
        assert_relative_eq!(w.matrix.abs(), DMatrix::identity(3, 3), epsilon = 1e-15);

        let w = whitener_from_noise(&diag(&[4.0, 1.0]), DEFAULT_EIG_FLOOR).unwrap();
        assert_relative_eq!(w.matrix.abs(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])), epsilon = 1e-15);
        assert!(!w.floor_applied);

        let w = whitener_from_noise(&diag(&[1.0, 1e-14]), 1e-8).unwrap();
        assert!(w.floor_applied);
        assert!(w.matrix.iter().all(|v| v.is_finite()));
        assert_eq!(w.noise_eigs[1], 1e-8);

        assert!(matches!(
            whitener_from_noise(&CovarianceMatrix::new(DMatrix::zeros(2, 2)).unwrap(), 1e-10),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn adjusted_examples() {
        let rn = random_spd(8, 4, "rn");
        let w = whitener_from_noise(&rn, DEFAULT_EIG_FLOOR).unwrap();
        let adj = adjusted_covariance(&rn, &w).unwrap();
        assert!((adj.matrix.values() - DMatrix::identity(8, 8)).amax() < 1e-8);

        let rn = diag(&[1.0, 2.0]);
        let w = whitener_from_noise(&rn, DEFAULT_EIG_FLOOR).unwrap();
        let adj = adjusted_covariance(&diag(&[5.0, 2.0]), &w).unwrap();
        // The whitener orders coordinates by descending noise eigenvalue.
        let spec = adjusted_spectrum(&adj);
        assert_relative_eq!(spec[0], 5.0, epsilon = 1e-14);
        assert_relative_eq!(spec[1], 1.0, epsilon = 1e-14);
        assert!(adj.matrix.values()[(0, 1)].abs() < 1e-15);

        assert!(adjusted_covariance(&CovarianceMatrix::identity(3), &w).is_err());
    }

    #[test]
    fn low_rank_signal_leaves_unit_bulk() {
        let (k, m) = (12, 3);
        let mut rng = substream(9, "g", 0);
        let g = DMatrix::from_vec(k, m, SamplingDist::Gaussian.draw(&mut rng, k * m));
        let rn = random_spd(k, 10, "rn");
        let r = CovarianceMatrix::new(&g * g.transpose() + rn.values()).unwrap();
        let w = whitener_from_noise(&rn, DEFAULT_EIG_FLOOR).unwrap();
        let eigs = adjusted_spectrum(&adjusted_covariance(&r, &w).unwrap());
        assert!(eigs[..m].iter().all(|&l| l > 1.0 + 1e-6));
        assert!(eigs[m..].iter().all(|&l| (l - 1.0).abs() <= 1e-8), "{eigs:?}");
    }

    #[test]
    fn whitener_optimality_examples() {
        let rep = verify_whitener_optimality(&CovarianceMatrix::identity(3).scaled(2.0).unwrap(), &CovarianceMatrix::identity(3))
            .unwrap();
        assert_relative_eq!(rep.lambda_max, 2.0, epsilon = 1e-14);
        assert!(rep.max_rel_error() < 1e-12);

        let rep = verify_whitener_optimality(&diag(&[2.0, 4.0]), &diag(&[1.0, 4.0])).unwrap();
        assert_relative_eq!(rep.lambda_max, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn perturbation_curve_is_linear_at_small_omega() {
        let r = random_spd(10, 20, "r");
        let rn = random_spd(10, 21, "rn");
        let omegas = [0.0, 1e-6, 1e-5, 1e-4, 1e-3];
        let curve = perturbation_curve(&r, &rn, &omegas, 5).unwrap();
        assert_eq!(curve[0], (0.0, 0.0));
        let slope = loglog_slope(&curve).unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
        let half = perturbation_curve(&r, &rn, &[5e-7], 5).unwrap()[0].1;
        assert!(curve[1].1 / half >= 2.0 / 1.3, "ratio {}", curve[1].1 / half);
        assert!(perturbation_curve(&r, &rn, &[], 5).is_err());
        assert!(perturbation_curve(&r, &rn, &[-1.0], 5).is_err());
    }
}
