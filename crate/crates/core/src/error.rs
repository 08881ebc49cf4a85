//! Error type shared by all modules of this crate.

use thiserror::Error;

/// Errors produced by model construction, bound evaluation, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// An input that must be finite was NaN or infinite.
    #[error("non-finite input: {what}")]
    NonFinite { what: &'static str },

    /// A parameter violated its domain (negative photon number, zero pixels, ...).
    #[error("invalid argument {what}: {why}")]
    InvalidArgument { what: &'static str, why: String },

    /// A sampled PSF grid that cannot support the requested evaluation.
    #[error("PSF grid configuration error: {0}")]
    PsfConfiguration(String),

    /// Malformed PSF grid file.
    #[error("PSF grid file error: {0}")]
    PsfFile(String),

    /// A measurement model was asked to evaluate a PSF kind it has no
    /// closed-form coefficients for.
    #[error("unsupported PSF model for {scheme}: {why}")]
    UnsupportedModel { scheme: &'static str, why: String },

    /// Covariance failed the positive-semidefinite check.
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, trace: f64 },

    /// The derivative vector has weight on directions of numerically zero
    /// variance, so the moment bound diverges instead of taking a finite value.
    #[error("degenerate moments: fraction {fraction:e} of the derivative vector lies outside the covariance support")]
    DegenerateMoments { fraction: f64 },

    /// Two moment sets whose component labels do not line up.
    #[error("component label mismatch: {0}")]
    LabelMismatch(String),

    /// Zero information: the error bound is infinite and reported as such
    /// rather than returning a non-finite number.
    #[error("infinite bound: the information is zero")]
    InfiniteBound,

    /// Finite-difference step small enough that cancellation dominates.
    #[error("step {step:e} is below {limit:e}; the finite-difference result would be roundoff-dominated")]
    StepTooSmall { step: f64, limit: f64 },

    /// Numerical quadrature failed its refinement check.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    /// A record batch mixing schemes, scenes, or outcome dimensions.
    #[error("heterogeneous trial records: {0}")]
    HeterogeneousRecords(String),

    /// I/O while reading or writing data files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
