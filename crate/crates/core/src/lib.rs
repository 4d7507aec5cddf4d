//! Estimating the number of latent sources in multichannel recordings by
//! counting spiked population eigenvalues of the noise-whitened covariance.
//!
//! The usual flow:
//!
//! 1. build a [`DataMatrix`] (or simulate one with [`simulator::simulate`]);
//! 2. estimate the noise covariance with [`noise::estimate_noise`];
//! 3. run [`intrinsic_dimensionality`] to get an [`IdReport`].
//!
//! ```
//! use spikeid_core::simulator::{simulate, SimulationConfig};
//! use spikeid_core::{estimate_noise, intrinsic_dimensionality, IdConfig, NoiseMethod, NoiseParams};
//!
//! let sim = simulate(&SimulationConfig::reference(0.1, 1))?;
//! let noise = estimate_noise(&sim.averaged, NoiseMethod::Fft, &NoiseParams::default())?;
//! let report = intrinsic_dimensionality(&sim.averaged, Some(&noise.covariance), &IdConfig::default())?;
//! println!("L = {}, spikes = {:?}", report.l, report.estimated_spikes);
//! # Ok::<(), spikeid_core::Error>(())
//! ```
//!
//! Baseline counts (AIC, MDL, EIF, PCA) live in [`baselines`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod rng;
pub mod simulator;
pub mod snr;
pub mod spike;

pub use error::{Error, Result, MODEL_NOT_APPLICABLE};
pub use linalg::{
    eigen_decompose, normalize_covariance, normalize_data, sample_covariance,
    symmetric_eigenvalues_desc, CovarianceMatrix, DataMatrix, EigenDecomposition, NormMode,
};
pub use noise::{estimate_noise, NoiseEstimate, NoiseMethod, NoiseParams};
pub use rng::{substream, SamplingDist};
pub use snr::{
    adjusted_covariance, snr_functional, whitener_from_noise, AdjustedCovariance, WhiteningOperator,
};
pub use spike::{
    intrinsic_dimensionality, intrinsic_dimensionality_from_covariance, Discrepancy, Epsilon0,
    EpsilonPrime, IdConfig, IdReport, StopRule, Thresholds,
};
