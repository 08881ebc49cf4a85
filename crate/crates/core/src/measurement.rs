//! Observation moments for the three concrete measurement schemes.
//!
//! Each scheme observes the image-plane field of the two thermal sources and
//! produces a vector record per shot:
//!
//! * **Direct imaging** — number-resolved counts on a pixel array spanning
//!   the image plane (pixels of equal width, infinite in y).
//! * **fin-SPADE** — photon counts in the Hermite-Gaussian modes
//!   `TEM_q0`, `0 ≤ q ≤ Q`, matched to a Gaussian PSF of half-width σ.
//! * **pix-SLIVER** — the field is split into its inversion-symmetric and
//!   antisymmetric parts by an image-inversion interferometer; each output
//!   hits its own pixel array with on/off detection.
//!
//! This module evaluates the mean vector, its separation derivative, and the
//! covariance matrix for each scheme ([`MomentSet`]), plus the conditional
//! rate functions the Monte Carlo simulator draws from, so analytics and
//! simulation share one formula source. The closed forms hold for the
//! Gaussian PSF; other PSF kinds are rejected.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fisher::{ComponentLabel, MomentSet};
use crate::quantum::Scene;

pub const SCHEME_DI: &str = "di";
pub const SCHEME_SPADE: &str = "spade";
pub const SCHEME_SLIVER: &str = "sliver";

/// Below this separation (in units of σ) the antisymmetric pixel coefficient
/// `α + γ − β` is evaluated from its small-d series instead of the direct
/// difference, which loses all significant digits as d → 0.
const SLIVER_SERIES_SWITCH_WIDTHS: f64 = 2e-3;
/// Poisson mode weights switch to log-space evaluation above this κ to avoid
/// underflow of e^{−κ} at very large separations.
const SPADE_LOG_SPACE_KAPPA: f64 = 30.0;

/// Gaussian upper-tail probability `Q(x) = (2π)^{-1/2} ∫_x^∞ e^{−t²/2} dt`.
pub fn q_function(x: f64) -> f64 {
    // libm's erfc is correctly rounded to ~1 ulp, which the pixel integrals
    // need out to |x| ~ 8
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A pixel array of equal-width pixels spanning `[-width/2, width/2]` in x at
/// 100% fill factor, infinite in y.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGeometry {
    width: f64,
    pixels: usize,
    edges: Vec<(f64, f64)>,
}

impl DetectorGeometry {
    pub fn new(width: f64, pixels: usize) -> Result<Self> {
        if !width.is_finite() || width <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "width",
                why: format!("must be finite and > 0, got {width}"),
            });
        }
        if pixels == 0 {
            return Err(Error::InvalidArgument {
                what: "pixels",
                why: "must be >= 1".into(),
            });
        }
        // shared boundaries are computed once so adjacent pixels tile exactly
        let boundaries: Vec<f64> = (0..=pixels)
            .map(|k| width * (k as f64 / pixels as f64 - 0.5))
            .collect();
        let edges = boundaries.windows(2).map(|w| (w[0], w[1])).collect();
        Ok(DetectorGeometry {
            width,
            pixels,
            edges,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    /// Pixel boundaries `(l_p, r_p)`.
    pub fn edges(&self) -> &[(f64, f64)] {
        &self.edges
    }
}

/// Per-pixel Gaussian-PSF integrals for a source pair at separation d.
///
/// `alpha[p]`/`gamma[p]` are the single-source image masses on pixel p for
/// the source displaced to ∓d/2; `beta[p]` is twice the interference-term
/// integral, `β_p = 2 e^{−d²/8σ²} [Q(l_p/σ) − Q(r_p/σ)]`, so that at `d = 0`
/// `β_p = α_p + γ_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Poisson mode weights of fin-SPADE: `κ = d²/16σ²` and
/// `f_q = κ^q e^{−κ} / q!` for `0 ≤ q ≤ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpadeWeights {
    pub kappa: f64,
    pub f: Vec<f64>,
}

/// Per-pixel intensity coefficients of the two pix-SLIVER outputs:
/// `f_p^(s) = α_p + γ_p + β_p` and `f_p^(a) = α_p + γ_p − β_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliverCoefficients {
    pub f_sym: Vec<f64>,
    pub f_asym: Vec<f64>,
}

fn require_gaussian(scene: &Scene, scheme: &'static str) -> Result<f64> {
    scene.psf().gaussian_sigma().ok_or_else(|| Error::UnsupportedModel {
        scheme,
        why: "closed-form pixel/mode coefficients exist for the Gaussian PSF only".into(),
    })
}

/// Pixel coefficients (α, β, γ) for direct imaging.
pub fn coefficients_di(scene: &Scene, geom: &DetectorGeometry) -> Result<PixelCoefficients> {
    let sigma = require_gaussian(scene, SCHEME_DI)?;
    Ok(pixel_coefficients(scene.d(), sigma, geom))
}

/// Gaussian mass of the pixel `(l, r)` for an image centered at `c`:
/// `Q((l−c)/σ) − Q((r−c)/σ)`, evaluated through the nearer tail so that
/// far-tail pixels keep relative (not just absolute) accuracy.
fn pixel_mass(l: f64, r: f64, c: f64, sigma: f64) -> f64 {
    let ul = (l - c) / sigma;
    let ur = (r - c) / sigma;
    if ul + ur >= 0.0 {
        q_function(ul) - q_function(ur)
    } else {
        q_function(-ur) - q_function(-ul)
    }
}

fn pixel_coefficients(d: f64, sigma: f64, geom: &DetectorGeometry) -> PixelCoefficients {
    let mut alpha = Vec::with_capacity(geom.pixels());
    let mut beta = Vec::with_capacity(geom.pixels());
    let mut gamma = Vec::with_capacity(geom.pixels());
    let env = (-d * d / (8.0 * sigma * sigma)).exp();
    for &(l, r) in geom.edges() {
        alpha.push(pixel_mass(l, r, -d / 2.0, sigma));
        gamma.push(pixel_mass(l, r, d / 2.0, sigma));
        beta.push(2.0 * env * pixel_mass(l, r, 0.0, sigma));
    }
    PixelCoefficients { alpha, beta, gamma }
}

/// `d/dd [α_p + γ_p]`, the four-exponential flux derivative through pixel
/// `(l, r)`; multiplied by N_s it is the direct-imaging mean derivative.
/// Grouped per edge so both pairs cancel exactly at `d = 0`.
fn flux_derivative(l: f64, r: f64, d: f64, sigma: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    let e = |u: f64| (-u * u / s2).exp();
    ((e(l - d / 2.0) - e(l + d / 2.0)) + (e(r + d / 2.0) - e(r - d / 2.0)))
        / (2.0 * (2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Moments of the direct-imaging count vector.
///
/// Mean `μ_p = N_s (α_p + γ_p)`; covariance
/// `C = N_s² (α αᵀ + β βᵀ/2 + γ γᵀ) + diag(μ)` — thermal bunching plus
/// Poisson shot noise. The interference term enters the conditional mean as
/// `β_p Re(A₊* A₋)` whose variance over the circular-Gaussian amplitudes is
/// `β_p² N_s²/2`, hence the β βᵀ/2.
pub fn di_moments(scene: &Scene, geom: &DetectorGeometry) -> Result<MomentSet> {
    let sigma = require_gaussian(scene, SCHEME_DI)?;
    let n = scene.n_s();
    let c = pixel_coefficients(scene.d(), sigma, geom);
    let p = geom.pixels();

    let mean = DVector::from_iterator(p, (0..p).map(|i| n * (c.alpha[i] + c.gamma[i])));
    let mean_dot = DVector::from_iterator(
        p,
        geom.edges()
            .iter()
            .map(|&(l, r)| n * flux_derivative(l, r, scene.d(), sigma)),
    );
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = n
                * n
                * (c.alpha[i] * c.alpha[j]
                    + 0.5 * c.beta[i] * c.beta[j]
                    + c.gamma[i] * c.gamma[j]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += mean[i];
    }
    let labels = (0..p)
        .map(|i| ComponentLabel::new(SCHEME_DI, "det", i as u32))
        .collect();
    MomentSet::new(mean, mean_dot, cov, labels)
}

/// Conditional pixel means given the source amplitudes:
/// `μ_{p|A} = α_p |A₊|² + γ_p |A₋|² + β_p Re(A₊* A₋)`, clamped at zero.
pub fn di_conditional_means(
    c: &PixelCoefficients,
    a_plus: Complex64,
    a_minus: Complex64,
) -> Vec<f64> {
    let ap2 = a_plus.norm_sqr();
    let am2 = a_minus.norm_sqr();
    let cross = (a_plus.conj() * a_minus).re;
    c.alpha
        .iter()
        .zip(&c.beta)
        .zip(&c.gamma)
        .map(|((&a, &b), &g)| (a * ap2 + g * am2 + b * cross).max(0.0))
        .collect()
}

/// Poisson mode weights for fin-SPADE with modes `0..=q_max`.
pub fn weights_spade(scene: &Scene, q_max: usize) -> Result<SpadeWeights> {
    let sigma = require_gaussian(scene, SCHEME_SPADE)?;
    let d = scene.d();
    let kappa = d * d / (16.0 * sigma * sigma);
    let mut f = Vec::with_capacity(q_max + 1);
    if kappa == 0.0 {
        f.push(1.0);
        f.resize(q_max + 1, 0.0);
    } else if kappa <= SPADE_LOG_SPACE_KAPPA {
        let mut fq = (-kappa).exp();
        f.push(fq);
        for q in 1..=q_max {
            fq *= kappa / q as f64;
            f.push(fq);
        }
    } else {
        let ln_kappa = kappa.ln();
        for q in 0..=q_max {
            f.push((q as f64 * ln_kappa - kappa - ln_gamma(q as f64 + 1.0)).exp());
        }
    }
    Ok(SpadeWeights { kappa, f })
}

/// Moments of the fin-SPADE count vector `(N_0, ..., N_Q)`.
///
/// Mean `μ_q = 2 N_s f_q`; derivative `μ̇_q = (N_s d / 4σ²)(f_{q−1} − f_q)`
/// with `f_{−1} = 0`. The even and odd modes couple to the statistically
/// independent sum and difference source amplitudes, so the covariance is
/// `C_qq = 4N_s² f_q² + 2N_s f_q`, `C_qq' = 4N_s² f_q f_q'` for even `q−q'`,
/// and zero for odd `q−q'`.
pub fn spade_moments(scene: &Scene, q_max: usize) -> Result<MomentSet> {
    let sigma = require_gaussian(scene, SCHEME_SPADE)?;
    let n = scene.n_s();
    let d = scene.d();
    let w = weights_spade(scene, q_max)?;
    let m = q_max + 1;

    let mean = DVector::from_iterator(m, w.f.iter().map(|&fq| 2.0 * n * fq));
    let pref = n * d / (4.0 * sigma * sigma);
    let mean_dot = DVector::from_iterator(
        m,
        (0..m).map(|q| {
            let f_prev = if q == 0 { 0.0 } else { w.f[q - 1] };
            pref * (f_prev - w.f[q])
        }),
    );
    let mut cov = DMatrix::zeros(m, m);
    for q in 0..m {
        for qp in q..m {
            let v = if (qp - q) % 2 == 0 {
                4.0 * n * n * w.f[q] * w.f[qp]
            } else {
                0.0
            };
            cov[(q, qp)] = v;
            cov[(qp, q)] = v;
        }
        cov[(q, q)] += 2.0 * n * w.f[q];
    }
    let labels = (0..m)
        .map(|q| {
            let block = if q % 2 == 0 { "even" } else { "odd" };
            ComponentLabel::new(SCHEME_SPADE, block, q as u32)
        })
        .collect();
    MomentSet::new(mean, mean_dot, cov, labels)
}

/// Conditional mode means given the sum/difference amplitudes `S`, `D`:
/// `μ_{q|A} = f_q |S|²` for even q, `f_q |D|²` for odd q.
pub fn spade_conditional_means(w: &SpadeWeights, s: Complex64, d_amp: Complex64) -> Vec<f64> {
    let s2 = s.norm_sqr();
    let d2 = d_amp.norm_sqr();
    w.f.iter()
        .enumerate()
        .map(|(q, &fq)| if q % 2 == 0 { fq * s2 } else { fq * d2 })
        .collect()
}

/// Intensity coefficients and their d-derivatives for the two SLIVER arms.
///
/// The antisymmetric coefficient is the difference `α + γ − β` of quantities
/// that agree to O(d²); below [`SLIVER_SERIES_SWITCH_WIDTHS`]·σ it is taken
/// from its series `c₂ d² + c₄ d⁴` (with `c₂ = ∫_pixel x²|ψ₀|² dx / (4σ⁴)`
/// computed in closed form), which is exact to ~1e-12 at the switch point.
fn sliver_f_vectors(
    d: f64,
    sigma: f64,
    geom: &DetectorGeometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = geom.pixels();
    let mut f_sym = Vec::with_capacity(p);
    let mut f_asym = Vec::with_capacity(p);
    let mut fdot_sym = Vec::with_capacity(p);
    let mut fdot_asym = Vec::with_capacity(p);
    let s2 = sigma * sigma;
    let env = (-d * d / (8.0 * s2)).exp();
    let series = d < SLIVER_SERIES_SWITCH_WIDTHS * sigma;

    for &(l, r) in geom.edges() {
        let ul = l / sigma;
        let ur = r / sigma;
        let m0 = pixel_mass(l, r, 0.0, sigma);
        let beta = 2.0 * env * m0;
        let alpha = pixel_mass(l, r, -d / 2.0, sigma);
        let gamma = pixel_mass(l, r, d / 2.0, sigma);
        let dsum = flux_derivative(l, r, d, sigma);
        let beta_dot = -(d / (4.0 * s2)) * beta;

        f_sym.push((alpha + gamma + beta).max(0.0));
        fdot_sym.push(dsum + beta_dot);

        if series {
            let c2 = (ul * phi(ul) - ur * phi(ur) + m0) / (4.0 * s2);
            let m4 = ((3.0 * ur - ur.powi(3)) * phi(ur) - (3.0 * ul - ul.powi(3)) * phi(ul))
                / (s2 * s2);
            let c4 = m4 / 192.0 - m0 / (64.0 * s2 * s2);
            f_asym.push((c2 * d * d + c4 * d.powi(4)).max(0.0));
            fdot_asym.push(2.0 * c2 * d + 4.0 * c4 * d.powi(3));
        } else {
            f_asym.push((alpha + gamma - beta).max(0.0));
            fdot_asym.push(dsum - beta_dot);
        }
    }
    (f_sym, f_asym, fdot_sym, fdot_asym)
}

/// Intensity coefficients `f_p^(s)`, `f_p^(a)` of the two SLIVER outputs.
pub fn coefficients_sliver(scene: &Scene, geom: &DetectorGeometry) -> Result<SliverCoefficients> {
    let sigma = require_gaussian(scene, SCHEME_SLIVER)?;
    let (f_sym, f_asym, _, _) = sliver_f_vectors(scene.d(), sigma, geom);
    Ok(SliverCoefficients { f_sym, f_asym })
}

/// Moments of the pix-SLIVER click vector, symmetric arm first.
///
/// Pixel p of arm α sees integrated intensity `f_p^(α) |S or D|²/4`, with
/// `|S|²`, `|D|²` independent exponentials of mean `2N_s`; the click
/// probability is `μ = x/(2+x)` for `x = f N_s`. Same-arm covariances come
/// from the shared exponential: `Cov(K_p, K_p') = 2 x x' / [(2+x)(2+x')(2+x+x')]`
/// (equal to the Bernoulli variance `2x/(2+x)²` at `p = p'`). Cross-arm
/// covariances vanish identically, so the two arms form exact blocks.
pub fn sliver_moments(scene: &Scene, geom: &DetectorGeometry) -> Result<MomentSet> {
    let sigma = require_gaussian(scene, SCHEME_SLIVER)?;
    let n = scene.n_s();
    let (f_sym, f_asym, fdot_sym, fdot_asym) = sliver_f_vectors(scene.d(), sigma, geom);
    let p = geom.pixels();
    let dim = 2 * p;

    let mut mean = DVector::zeros(dim);
    let mut mean_dot = DVector::zeros(dim);
    let mut cov = DMatrix::zeros(dim, dim);
    for (arm, (f, fdot)) in [(0, (&f_sym, &fdot_sym)), (1, (&f_asym, &fdot_asym))] {
        let off = arm * p;
        let x: Vec<f64> = f.iter().map(|&fp| fp * n).collect();
        for i in 0..p {
            mean[off + i] = x[i] / (2.0 + x[i]);
            mean_dot[off + i] = 2.0 * fdot[i] * n / ((2.0 + x[i]) * (2.0 + x[i]));
            for j in i..p {
                let v = if i == j {
                    2.0 * x[i] / ((2.0 + x[i]) * (2.0 + x[i]))
                } else {
                    2.0 * x[i] * x[j] / ((2.0 + x[i]) * (2.0 + x[j]) * (2.0 + x[i] + x[j]))
                };
                cov[(off + i, off + j)] = v;
                cov[(off + j, off + i)] = v;
            }
        }
    }
    let labels = (0..dim)
        .map(|i| {
            let (block, idx) = if i < p { ("sym", i) } else { ("asym", i - p) };
            ComponentLabel::new(SCHEME_SLIVER, block, idx as u32)
        })
        .collect();
    MomentSet::new(mean, mean_dot, cov, labels)
}

/// Conditional per-pixel integrated intensities `(I^(s), I^(a))` given the
/// sum/difference amplitudes: `f_p^(s)|S|²/4` and `f_p^(a)|D|²/4`.
pub fn sliver_conditional_intensities(
    c: &SliverCoefficients,
    s: Complex64,
    d_amp: Complex64,
) -> (Vec<f64>, Vec<f64>) {
    let s2 = s.norm_sqr() / 4.0;
    let d2 = d_amp.norm_sqr() / 4.0;
    (
        c.f_sym.iter().map(|&f| f * s2).collect(),
        c.f_asym.iter().map(|&f| f * d2).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::PsfModel;
    use approx::assert_relative_eq;

    fn scene(n_s: f64, d: f64) -> Scene {
        Scene::new(n_s, d, PsfModel::gaussian(1.0).unwrap()).unwrap()
    }

    fn geom(width: f64, pixels: usize) -> DetectorGeometry {
        DetectorGeometry::new(width, pixels).unwrap()
    }

    /// 40-digit reference values of the Gaussian upper-tail integral
    /// (digits beyond f64 kept to document the source values).
    #[allow(clippy::excessive_precision)]
    const Q_TABLE: [(f64, f64); 16] = [
        (-8.00, 0.999999999999999378),
        (-5.50, 0.999999981010437534),
        (-3.00, 0.998650101968369905),
        (-1.00, 0.841344746068542949),
        (-0.25, 0.598706325682923724),
        (0.00, 0.500000000000000000),
        (0.25, 0.401293674317076276),
        (0.50, 0.308537538725986896),
        (1.00, 0.158655253931457051),
        (1.50, 0.0668072012688580660),
        (2.50, 0.00620966532577613517),
        (4.00, 0.0000316712418331199213),
        (5.50, 1.89895624658877194e-8),
        (6.50, 4.01600058385911781e-11),
        (7.25, 2.08385815867206943e-13),
        (8.00, 6.22096057427178412e-16),
    ];

    #[test]
    fn q_function_reference_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!(q_function(10.0) < 1e-23);
        for &(x, q) in &Q_TABLE {
            assert_relative_eq!(q_function(x), q, max_relative = 1e-14);
        }
    }

    /// Simpson quadrature of the defining integral as an independent check
    /// (moderate tolerance; the frozen table above carries the tight one).
    #[test]
    fn q_function_matches_quadrature_oracle() {
        let quad = |x: f64| -> f64 {
            let n = 200_001;
            let h = 40.0 / (n as f64 - 1.0);
            let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut acc = f(x) + f(x + 40.0);
            for i in 1..n - 1 {
                acc += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        for x in [-2.0, 0.0, 1.0, 3.5] {
            assert_relative_eq!(q_function(x), quad(x), max_relative = 1e-10);
        }
        assert_relative_eq!(q_function(1.0), 0.158_655_253_931_457_05, max_relative = 1e-14);
    }

    #[test]
    fn geometry_partitions_exactly() {
        let g = geom(17.0, 50);
        assert_eq!(g.edges().len(), 50);
        assert_eq!(g.edges()[0].0, -8.5);
        assert_eq!(g.edges()[49].1, 8.5);
        for w in g.edges().windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let width = 17.0 / 50.0;
        for &(l, r) in g.edges() {
            assert_relative_eq!(r - l, width, max_relative = 1e-12);
        }
        assert!(DetectorGeometry::new(17.0, 0).is_err());
        assert!(DetectorGeometry::new(-1.0, 5).is_err());
    }

    #[test]
    fn full_width_pixel_collects_everything() {
        let sc = scene(1.5, 1.3);
        let c = coefficients_di(&sc, &geom(100.0, 1)).unwrap();
        assert_relative_eq!(c.alpha[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.gamma[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(
            c.beta[0],
            2.0 * (-1.3_f64 * 1.3 / 8.0).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn beta_at_zero_separation_equals_alpha_plus_gamma() {
        let c = coefficients_di(&scene(1.5, 0.0), &geom(17.0, 50)).unwrap();
        for p in 0..50 {
            assert_relative_eq!(c.beta[p], c.alpha[p] + c.gamma[p], max_relative = 1e-13);
            assert!(c.alpha[p] >= 0.0 && c.beta[p] <= 2.0);
        }
        let sums: (f64, f64) = (c.alpha.iter().sum(), c.gamma.iter().sum());
        assert!(sums.0 <= 1.0 + 1e-12 && sums.1 <= 1.0 + 1e-12);
    }

    #[test]
    fn di_mean_derivative_vanishes_at_zero_separation() {
        let m = di_moments(&scene(1.5, 0.0), &geom(17.0, 50)).unwrap();
        for p in 0..50 {
            assert_eq!(m.mean_dot()[p], 0.0);
        }
    }

    /// Single full-detector pixel: the mean from the Q-function coefficients
    /// against direct 2D Simpson quadrature of the two image intensities.
    #[test]
    fn di_mean_matches_intensity_quadrature() {
        let w = 17.0;
        let sc = scene(1.5, 2.0);
        let m = di_moments(&sc, &geom(w, 1)).unwrap();

        let n = 1601;
        let hx = w / (n as f64 - 1.0);
        let ylim = 12.0;
        let hy = 2.0 * ylim / (n as f64 - 1.0);
        let sw = |i: usize| -> f64 {
            if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let inten = |x: f64, y: f64| -> f64 {
            let psi2 = |cx: f64| ((x - cx) * (x - cx) + y * y) / 2.0;
            ((-psi2(1.0)).exp() + (-psi2(-1.0)).exp()) / (2.0 * std::f64::consts::PI)
        };
        let mut acc = 0.0;
        for iy in 0..n {
            let y = -ylim + iy as f64 * hy;
            let mut row = 0.0;
            for ix in 0..n {
                let x = -w / 2.0 + ix as f64 * hx;
                row += sw(ix) * inten(x, y);
            }
            acc += sw(iy) * row;
        }
        let oracle = 1.5 * acc * hx * hy / 9.0;
        assert_relative_eq!(m.mean()[0], oracle, max_relative = 1e-8);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn spade_weights_match_direct_formula() {
        let w = weights_spade(&scene(1.5, 2.0), 5).unwrap();
        assert_eq!(w.kappa, 0.25);
        let expected = [
            0.778_800_783_071_404_9,
            0.194_700_195_767_851_22,
            0.024_337_524_470_981_4,
            0.002_028_127_039_248_450_2,
            1.267_579_399_530_281_4e-4,
            6.337_896_997_651_407e-6,
        ];
        for (q, &e) in expected.iter().enumerate() {
            assert_relative_eq!(w.f[q], e, max_relative = 1e-14);
            // recurrence against the direct log-space formula
            let direct =
                (q as f64 * 0.25_f64.ln() - 0.25 - ln_gamma(q as f64 + 1.0)).exp();
            assert_relative_eq!(w.f[q], direct, max_relative = 1e-14);
        }
        let total: f64 = w.f.iter().sum();
        assert!(total <= 1.0 + 1e-12);
    }

    #[test]
    fn spade_degenerates_to_fundamental_mode_at_zero() {
        let w = weights_spade(&scene(1.5, 0.0), 4).unwrap();
        assert_eq!(w.f, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let m = spade_moments(&scene(1.5, 0.0), 4).unwrap();
        assert_eq!(m.mean()[0], 3.0);
        for q in 1..=4 {
            assert_eq!(m.mean()[q], 0.0);
        }
    }

    #[test]
    fn spade_mean_and_parity_structure() {
        let m = spade_moments(&scene(1.5, 2.0), 5).unwrap();
        assert_relative_eq!(m.mean()[0], 2.336_402_349_214_214_6, max_relative = 1e-14);
        // odd mode gaps decouple, even gaps correlate
        assert_eq!(m.cov()[(0, 1)], 0.0);
        let w = weights_spade(&scene(1.5, 2.0), 5).unwrap();
        assert_relative_eq!(
            m.cov()[(0, 2)],
            4.0 * 1.5 * 1.5 * w.f[0] * w.f[2],
            max_relative = 1e-14
        );
    }

    #[test]
    fn sliver_asym_arm_dark_at_zero_separation() {
        let c = coefficients_sliver(&scene(1.5, 0.0), &geom(17.0, 40)).unwrap();
        for p in 0..40 {
            assert_eq!(c.f_asym[p], 0.0);
            assert!(c.f_sym[p] >= 0.0);
        }
        let m = sliver_moments(&scene(1.5, 0.0), &geom(17.0, 40)).unwrap();
        for p in 40..80 {
            assert_eq!(m.mean()[p], 0.0);
            assert_eq!(m.cov()[(p, p)], 0.0);
        }
    }

    #[test]
    fn sliver_dark_pixel_keeps_finite_derivative() {
        // at d = 0 every asym pixel is dark but the mean derivative is the
        // finite limit 2 f' N / 4
        let m = sliver_moments(&scene(1.5, 0.0), &geom(17.0, 40)).unwrap();
        for p in 40..80 {
            assert!(m.mean_dot()[p].is_finite());
        }
    }

    #[test]
    fn sliver_series_joins_direct_branch_smoothly() {
        let g = geom(17.0, 40);
        let eps = 1e-12;
        let below = sliver_moments(&scene(1.5, (SLIVER_SERIES_SWITCH_WIDTHS - eps) * 1.0), &g).unwrap();
        let above = sliver_moments(&scene(1.5, (SLIVER_SERIES_SWITCH_WIDTHS + eps) * 1.0), &g).unwrap();
        for p in 40..80 {
            if above.mean()[p] > 1e-30 {
                assert_relative_eq!(below.mean()[p], above.mean()[p], max_relative = 1e-6);
            }
            if above.mean_dot()[p].abs() > 1e-30 {
                assert_relative_eq!(below.mean_dot()[p], above.mean_dot()[p], max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn sliver_same_arm_covariance_matches_raw_expression() {
        // the packaged form 2xy/[(2+x)(2+y)(2+x+y)] against the literal
        // E[K K'] - mu mu' difference at moderate intensities
        let m = sliver_moments(&scene(1.5, 2.0), &geom(17.0, 8)).unwrap();
        let c = coefficients_sliver(&scene(1.5, 2.0), &geom(17.0, 8)).unwrap();
        let n = 1.5;
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let (xi, xj) = (c.f_sym[i] * n, c.f_sym[j] * n);
                let e_kk = 1.0 - 2.0 / (2.0 + xi) - 2.0 / (2.0 + xj) + 2.0 / (2.0 + xi + xj);
                let raw = e_kk - (xi / (2.0 + xi)) * (xj / (2.0 + xj));
                assert_relative_eq!(m.cov()[(i, j)], raw, epsilon = 1e-15, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn sliver_cross_arm_covariance_is_exactly_zero() {
        let m = sliver_moments(&scene(1.5, 1.0), &geom(17.0, 40)).unwrap();
        for i in 0..40 {
            for j in 40..80 {
                assert_eq!(m.cov()[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn arm_energies_sum_to_direct_imaging_flux() {
        // mean photon flux per pixel: N(f_s + f_a)/2 equals the DI mean
        let g = geom(17.0, 40);
        let sc = scene(1.5, 1.3);
        let c = coefficients_sliver(&sc, &g).unwrap();
        let di = di_moments(&sc, &g).unwrap();
        for p in 0..40 {
            let split = 1.5 * (c.f_sym[p] + c.f_asym[p]) / 2.0;
            assert_relative_eq!(split, di.mean()[p], epsilon = 1e-15, max_relative = 1e-8);
        }
    }

    #[test]
    fn non_gaussian_psf_is_rejected_by_all_schemes() {
        let sampled = PsfModel::Sampled(crate::psf::SampledPsf::gaussian(1.0, 8.5, 128).unwrap());
        let sc = Scene::new(1.5, 1.0, sampled).unwrap();
        let g = geom(17.0, 10);
        assert!(matches!(
            di_moments(&sc, &g),
            Err(Error::UnsupportedModel { .. })
        ));
        assert!(matches!(
            spade_moments(&sc, 3),
            Err(Error::UnsupportedModel { .. })
        ));
        assert!(matches!(
            sliver_moments(&sc, &g),
            Err(Error::UnsupportedModel { .. })
        ));
    }
}
