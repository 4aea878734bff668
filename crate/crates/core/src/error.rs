//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by hierarchy construction, estimation, reconciliation,
/// forecasting, simulation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// The node tree violates a structural invariant (cycles, multiple
    /// roots, bad level ordering). Carries the offending node where known.
    #[error("hierarchy structure: {0}")]
    Structure(String),

    /// Array or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Too few observations for the requested estimator or fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A residual column has zero variance, so correlations are undefined.
    #[error("zero variance in column {0}; correlation-based shrinkage is undefined")]
    ZeroVariance(String),

    /// A matrix factorization failed (typically: the matrix is not
    /// positive definite).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// A linear system is too ill-conditioned to solve reliably.
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    /// A non-finite value (NaN or infinity) was found where finite data
    /// is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A model fit failed for a named series.
    #[error("fit failed for series {series}: {reason}")]
    FitFailed { series: String, reason: String },

    /// Input data (CSV, config file) is malformed or incomplete.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    TomlParse(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    TomlSerialize(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
