//! Quantum information limits for the two-source separation problem.
//!
//! Two equal-strength thermal point sources with per-source mean photon
//! number `N_s` are imaged through a PSF; the unknown is their transverse
//! separation `d`. This module computes the quantum Fisher information of the
//! family of image-plane states, its split into contributions from the
//! inversion-symmetric and antisymmetric field components, the closed-form
//! fidelity between states at two separations, and the resulting
//! Cramér-Rao bound on the mean squared error of any unbiased estimator.

use crate::error::{Error, Result};
use crate::psf::{overlap_derivatives_unchecked, overlap_unchecked, PsfModel};

/// Minimum finite-difference step, in units of the PSF width, below which
/// `1 − F` is destroyed by cancellation (it is quadratic in the step).
const MIN_FD_STEP_WIDTHS: f64 = 1e-6;

/// One estimation problem instance: source strength, true separation, PSF.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    n_s: f64,
    d: f64,
    psf: PsfModel,
}

impl Scene {
    pub fn new(n_s: f64, d: f64, psf: PsfModel) -> Result<Self> {
        if !n_s.is_finite() {
            return Err(Error::NonFinite { what: "n_s" });
        }
        if !d.is_finite() {
            return Err(Error::NonFinite { what: "d" });
        }
        if n_s < 0.0 {
            return Err(Error::InvalidArgument {
                what: "n_s",
                why: format!("must be >= 0, got {n_s}"),
            });
        }
        if d < 0.0 {
            return Err(Error::InvalidArgument {
                what: "d",
                why: format!("must be >= 0, got {d}"),
            });
        }
        Ok(Scene { n_s, d, psf })
    }

    /// Per-source mean photon number.
    pub fn n_s(&self) -> f64 {
        self.n_s
    }

    /// True separation of the two sources.
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn psf(&self) -> &PsfModel {
        &self.psf
    }

    /// Same scene at a different separation.
    pub fn with_d(&self, d: f64) -> Result<Self> {
        Scene::new(self.n_s, d, self.psf.clone())
    }
}

/// Quantum Fisher information and its symmetric/antisymmetric decomposition.
///
/// The field decomposes into components that are even and odd under image
/// inversion; the states factorize accordingly and the informations add:
/// `total = sym + asym`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiBreakdown {
    pub total: f64,
    pub sym: f64,
    pub asym: f64,
}

/// Quantum Fisher information for the separation of the two sources.
///
/// With δ, γ, β the overlap function of the PSF and its two derivatives at
/// the scene separation, and β₀ = β(0):
///
/// ```text
/// K      = −2 β₀ N − 2 γ² (1+N) N² / [(1+N)² − δ² N²]
/// K_sym  =  [β − β₀] N − N² γ² / (1 + N (1+δ))
/// K_asym = −[β + β₀] N − N² γ² / (1 + N (1−δ))
/// ```
///
/// The first term of `K` is separation-independent and equals the weak-source
/// limit; the γ² term carves a dip at intermediate separations that deepens
/// with `N`. At `d = 0` and `d → ∞` the maximum `−2β₀N` is attained.
pub fn qfi(scene: &Scene) -> QfiBreakdown {
    let n = scene.n_s();
    let od = overlap_derivatives_unchecked(scene.psf(), scene.d());
    let beta0 = overlap_derivatives_unchecked(scene.psf(), 0.0).beta;
    let g2 = od.gamma * od.gamma;
    let np1 = 1.0 + n;
    let total = -2.0 * beta0 * n - 2.0 * g2 * np1 * n * n / (np1 * np1 - od.delta * od.delta * n * n);
    let sym = (od.beta - beta0) * n - n * n * g2 / (1.0 + n * (1.0 + od.delta));
    let asym = -(od.beta + beta0) * n - n * n * g2 / (1.0 + n * (1.0 - od.delta));
    QfiBreakdown { total, sym, asym }
}

/// Fidelity `F(ρ_{d1}, ρ_{d2})` between the thermal two-source states at
/// separations `d1` and `d2`, for per-source strength `n_s`.
///
/// Closed form: the state factorizes over the symmetric and antisymmetric
/// components and the fidelity is the product of one factor per component,
///
/// ```text
/// 1/F_s = sqrt((1 + N[1+δ(d1)])(1 + N[1+δ(d2)])) − N |δ(d−) + δ(d+)|
/// 1/F_a = sqrt((1 + N[1−δ(d1)])(1 + N[1−δ(d2)])) − N |δ(d−) − δ(d+)|
/// ```
///
/// with `d∓ = (d1 ∓ d2)/2`. Separations may be passed with either sign; the
/// state depends on them only through the even overlap function.
pub fn fidelity(psf: &PsfModel, n_s: f64, d1: f64, d2: f64) -> Result<f64> {
    if !n_s.is_finite() {
        return Err(Error::NonFinite { what: "n_s" });
    }
    if !(d1.is_finite() && d2.is_finite()) {
        return Err(Error::NonFinite { what: "d1/d2" });
    }
    if n_s < 0.0 {
        return Err(Error::InvalidArgument {
            what: "n_s",
            why: format!("must be >= 0, got {n_s}"),
        });
    }
    if d1 == d2 {
        // F(rho, rho) = 1 identically; the closed form reduces to it only up
        // to rounding, so the equal-argument case returns it exactly.
        return Ok(1.0);
    }
    let del1 = overlap_unchecked(psf, d1);
    let del2 = overlap_unchecked(psf, d2);
    let del_m = overlap_unchecked(psf, (d1 - d2) / 2.0);
    let del_p = overlap_unchecked(psf, (d1 + d2) / 2.0);
    let inv_fs = ((1.0 + n_s * (1.0 + del1)) * (1.0 + n_s * (1.0 + del2))).sqrt()
        - n_s * (del_m + del_p).abs();
    let inv_fa = ((1.0 + n_s * (1.0 - del1)) * (1.0 + n_s * (1.0 - del2))).sqrt()
        - n_s * (del_m - del_p).abs();
    Ok((1.0 / (inv_fs * inv_fa)).min(1.0))
}

/// Quantum Fisher information via the fidelity limit
/// `K = 8 [1 − F(ρ_{d1}, ρ_{d2})] / (d2 − d1)²` with a symmetric stencil of
/// width `step` around the scene separation (shifted to stay in `d ≥ 0`).
///
/// This is an independent route to [`qfi`] and serves as its oracle; `step`
/// must stay well above roundoff (the default guard is `1e-6` PSF widths)
/// because `1 − F` is quadratic in `step`.
pub fn qfi_from_fidelity(scene: &Scene, step: f64) -> Result<f64> {
    if !step.is_finite() {
        return Err(Error::NonFinite { what: "step" });
    }
    let limit = MIN_FD_STEP_WIDTHS * scene.psf().characteristic_width();
    if step <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "step",
            why: format!("must be > 0, got {step}"),
        });
    }
    if step < limit {
        return Err(Error::StepTooSmall { step, limit });
    }
    let d1 = (scene.d() - step / 2.0).max(0.0);
    let d2 = d1 + step;
    let f = fidelity(scene.psf(), scene.n_s(), d1, d2)?;
    Ok(8.0 * (1.0 - f) / (step * step))
}

/// Cramér-Rao bound `1 / (trials × K)` on the MSE of any unbiased estimate of
/// the separation from `trials` independent repetitions.
///
/// A zero-information scene (`n_s = 0`) has an infinite bound, reported as
/// [`Error::InfiniteBound`] rather than as a non-finite number.
pub fn qcrb(scene: &Scene, trials: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument {
            what: "trials",
            why: "must be >= 1".into(),
        });
    }
    let k = qfi(scene).total;
    if k <= 0.0 {
        return Err(Error::InfiniteBound);
    }
    Ok(1.0 / (trials as f64 * k))
}
