use thiserror::Error;

/// Message emitted when the spectrum shows no spike/bulk separation.
pub const MODEL_NOT_APPLICABLE: &str = "The spiked eigenvalues model cannot be employed";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input data violates a quality requirement (non-finite values, bad shape).
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    /// Input is mathematically degenerate for the requested operation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigen-decomposition did not converge (dim {dim}, max |a_ij| = {max_abs:e}, frobenius = {frobenius:e})")]
    NoConvergence {
        dim: usize,
        max_abs: f64,
        frobenius: f64,
    },

    /// The bulk-threshold search found no gap between spikes and bulk.
    #[error("{}", MODEL_NOT_APPLICABLE)]
    ModelNotApplicable,

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
