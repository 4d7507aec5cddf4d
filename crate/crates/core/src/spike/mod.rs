//! Spiked population eigenvalue estimation and the intrinsic dimensionality
//! pipeline built on it.

pub mod estimate;
pub mod model;
pub mod pipeline;
pub mod thresholds;

pub use estimate::{estimate_bulk, estimate_spike_group, group_eigenvalues, group_mean, mp_edges};
pub use model::{
    bartlett_factor, haar_orthogonal, sample_spiked_covariance, sample_spiked_model, Rotation,
    SpikedModelSpec,
};
pub use pipeline::{
    identify_from_spectrum, intrinsic_dimensionality, intrinsic_dimensionality_from_covariance,
    Epsilon0, EpsilonPrime, IdConfig, IdReport, Thresholds,
};
pub use thresholds::{
    candidate_population, choose_delta, choose_epsilon, Discrepancy, EpsilonCandidate,
    EpsilonChoice, EpsilonSearch, StopRule,
};
