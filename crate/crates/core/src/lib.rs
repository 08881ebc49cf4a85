//! Quantum and classical precision limits for estimating the transverse
//! separation of two thermal point sources.
//!
//! The crate is organized around one pipeline:
//!
//! * [`psf`] — PSF models and the overlap calculus (δ, γ, β, mean-squared
//!   spatial bandwidth) every bound is built from;
//! * [`quantum`] — the quantum Fisher information of the thermal two-source
//!   state family, the closed-form state fidelity, and the Cramér-Rao bound;
//! * [`measurement`] — observation moments (mean, derivative, covariance)
//!   for direct imaging, Hermite-Gaussian mode sorting (fin-SPADE), and
//!   inversion interferometry with on/off pixel arrays (pix-SLIVER);
//! * [`fisher`] — the moment lower bound `J ≥ μ̇ᵀ C⁻¹ μ̇` on the classical
//!   Fisher information, robust to singular covariances;
//! * [`montecarlo`] — semiclassical simulation of the photodetection
//!   process, empirical moment validation, and maximum-likelihood estimator
//!   benchmarks against the quantum bound.
//!
//! All numerical routines are pure functions of immutable inputs and safe to
//! call concurrently.

pub mod error;
pub mod fisher;
pub mod measurement;
pub mod montecarlo;
pub mod psf;
pub mod quantum;

pub use error::{Error, Result};
pub use fisher::{fi_lower_bound, BoundResult, ComponentLabel, MomentSet};
pub use measurement::DetectorGeometry;
pub use psf::{mean_square_bandwidth, overlap, overlap_derivatives, PsfModel, SampledPsf};
pub use quantum::{fidelity, qcrb, qfi, qfi_from_fidelity, QfiBreakdown, Scene};
