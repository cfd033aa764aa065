//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants are grouped by the
//! subsystem that raises them so callers (in particular the CLI) can map
//! failures to distinct exit codes without string matching.

use thiserror::Error;

/// Errors raised by grid construction, operator assembly, spectral
/// computations, sampling, and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid geometry (dimension, point count, extent).
    #[error("invalid grid: {0}")]
    Grid(String),

    /// Invalid kernel parameters (non-positive variance, length, energy...).
    #[error("invalid kernel: {0}")]
    Kernel(String),

    /// A dense object would exceed the configured size cap.
    #[error("size cap exceeded: {actual} degrees of freedom > cap {cap} ({context})")]
    SizeCap {
        /// Total degrees of freedom requested.
        actual: usize,
        /// Configured cap.
        cap: usize,
        /// What was being built.
        context: String,
    },

    /// An operator expected to be positive semidefinite has a substantially
    /// negative eigenvalue.
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e} vs scale {scale:e}")]
    NotPsd {
        /// Most negative eigenvalue found.
        min_eig: f64,
        /// Largest eigenvalue magnitude, used as the relative scale.
        scale: f64,
    },

    /// Shape/compatibility mismatch between operators, grids, or vectors.
    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    /// The dense LAPACK eigensolver failed to converge or rejected its input.
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    /// A spectral computation was asked for structure the spectrum lacks
    /// (for example a positive top group that does not exist).
    #[error("spectrum lacks required structure: {0}")]
    Spectrum(String),

    /// Invalid sampling configuration (tilt outside its validity window,
    /// non-positive sample budget, ...).
    #[error("invalid sampling configuration: {0}")]
    Sampling(String),

    /// A Monte Carlo run exhausted its budget without producing usable output
    /// (for example rejection sampling with zero acceptances).
    #[error("sampling budget exhausted: {0}")]
    BudgetExhausted(String),

    /// Importance weights degenerated below the configured effective-sample
    /// floor.
    #[error("degenerate importance weights: effective sample size {ess:.1} < floor {floor:.1}")]
    DegenerateWeights {
        /// Realized effective sample size.
        ess: f64,
        /// Configured minimum.
        floor: f64,
    },

    /// Numerical quadrature could not reach its target accuracy.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// Invalid parameters for one of the worked applications (non-positive
    /// scales, degenerate orientation vectors, ...).
    #[error("invalid application parameters: {0}")]
    Application(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
