//! Point-spread-function models and their overlap calculus.
//!
//! Everything downstream (quantum bounds, measurement moments) consumes a PSF
//! only through the overlap function `δ(d) = ∫ ψ*(ρ) ψ(ρ − (d,0)) dρ` and its
//! first two derivatives `γ = δ'` and `β = γ'`. For the circular Gaussian PSF
//! these are closed forms; sampled PSFs are handled by quadrature on their
//! grid. PSFs are required to be inversion symmetric, `ψ(−ρ) = ψ(ρ)`, which
//! makes δ real and even; the derivative formulas additionally assume a
//! square-integrable `∂ψ/∂x` (true of any diffraction-limited system), so
//! that the mean-squared spatial bandwidth is finite.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pointwise tolerance for the inversion-symmetry check on sampled grids.
const SYMMETRY_TOL: f64 = 1e-12;
/// Allowed deviation of `∫|ψ|² dρ` from one.
const NORMALIZATION_TOL: f64 = 1e-9;
/// Required grid half-extent in units of the effective PSF width. A Gaussian
/// truncated at eight widths carries < 1e-14 of tail energy.
const MIN_EXTENT_WIDTHS: f64 = 8.0;
/// Finite-difference steps for sampled-PSF derivatives, in units of the
/// effective width. First derivative uses the smaller step; the second uses a
/// larger one because the curvature stencil divides by the step squared.
const GAMMA_STEP_WIDTHS: f64 = 1e-4;
const BETA_STEP_WIDTHS: f64 = 1e-3;

/// An amplitude point-spread function.
#[derive(Debug, Clone)]
pub enum PsfModel {
    /// Circular Gaussian `ψ(ρ) = (2πσ²)^{-1/2} exp(−|ρ|²/4σ²)` of half-width σ.
    Gaussian { sigma: f64 },
    /// Arbitrary inversion-symmetric PSF given as a complex grid of samples.
    Sampled(SampledPsf),
}

impl PsfModel {
    /// Gaussian PSF of half-width `sigma`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::NonFinite { what: "sigma" });
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "sigma",
                why: format!("must be > 0, got {sigma}"),
            });
        }
        Ok(PsfModel::Gaussian { sigma })
    }

    /// The length scale used for step sizing and step-size validation:
    /// σ for the Gaussian kind, the RMS width of `|ψ|²` for sampled PSFs.
    pub fn characteristic_width(&self) -> f64 {
        match self {
            PsfModel::Gaussian { sigma } => *sigma,
            PsfModel::Sampled(s) => s.inner.sigma_eff_x,
        }
    }

    /// σ if this is the Gaussian kind.
    pub fn gaussian_sigma(&self) -> Option<f64> {
        match self {
            PsfModel::Gaussian { sigma } => Some(*sigma),
            PsfModel::Sampled(_) => None,
        }
    }
}

impl PartialEq for PsfModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PsfModel::Gaussian { sigma: a }, PsfModel::Gaussian { sigma: b }) => a == b,
            (PsfModel::Sampled(a), PsfModel::Sampled(b)) => {
                Arc::ptr_eq(&a.inner, &b.inner)
                    || (a.inner.nx == b.inner.nx
                        && a.inner.ny == b.inner.ny
                        && a.inner.dx == b.inner.dx
                        && a.inner.dy == b.inner.dy
                        && a.inner.values == b.inner.values)
            }
            _ => false,
        }
    }
}

/// First two derivatives of the overlap function at a separation.
///
/// `delta` is dimensionless, `gamma` has units of 1/length and `beta` of
/// 1/length². For inversion-symmetric PSFs δ is even, γ odd, β even, and
/// `δ(0) = 1`, `γ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapDerivatives {
    pub delta: f64,
    pub gamma: f64,
    pub beta: f64,
}

/// Overlap `δ(d)` of the PSF with its copy shifted by `d` along x.
///
/// Negative separations are folded by the symmetry `δ(−d) = δ(d)`. For
/// sampled PSFs a shift beyond [`SampledPsf::resolvable_shift`] cannot be
/// represented on the grid and is a configuration error.
pub fn overlap(psf: &PsfModel, d: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::NonFinite { what: "d" });
    }
    check_shift_range(psf, d)?;
    Ok(overlap_unchecked(psf, d))
}

/// `(δ, γ, β)` at separation `d`.
///
/// Closed forms for the Gaussian kind; central finite differences of the
/// overlap quadrature for sampled PSFs.
pub fn overlap_derivatives(psf: &PsfModel, d: f64) -> Result<OverlapDerivatives> {
    if !d.is_finite() {
        return Err(Error::NonFinite { what: "d" });
    }
    check_shift_range(psf, d)?;
    Ok(overlap_derivatives_unchecked(psf, d))
}

fn check_shift_range(psf: &PsfModel, d: f64) -> Result<()> {
    if let PsfModel::Sampled(s) = psf {
        let max = s.resolvable_shift();
        if d.abs() > max {
            return Err(Error::PsfConfiguration(format!(
                "shift {d} is not resolvable on the grid (limit {max:.3}); enlarge the grid extent"
            )));
        }
    }
    Ok(())
}

/// Mean-squared spatial bandwidth `(Δk_x²) = ∫ |∂ψ/∂x|² dρ = −β(0)`.
pub fn mean_square_bandwidth(psf: &PsfModel) -> f64 {
    match psf {
        PsfModel::Gaussian { sigma } => 1.0 / (4.0 * sigma * sigma),
        PsfModel::Sampled(_) => -overlap_derivatives_unchecked(psf, 0.0).beta,
    }
}

pub(crate) fn overlap_unchecked(psf: &PsfModel, d: f64) -> f64 {
    match psf {
        PsfModel::Gaussian { sigma } => (-d * d / (8.0 * sigma * sigma)).exp(),
        // beyond the grid half-extent the representable overlap is below the
        // tail floor; report zero rather than the wrapped interpolant
        PsfModel::Sampled(s) => {
            if d.abs() >= s.inner.half_extent_x {
                0.0
            } else {
                s.overlap_complex(d).re
            }
        }
    }
}

pub(crate) fn overlap_derivatives_unchecked(psf: &PsfModel, d: f64) -> OverlapDerivatives {
    match psf {
        PsfModel::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            let delta = (-d * d / (8.0 * s2)).exp();
            let gamma = -(d / (4.0 * s2)) * delta;
            let beta = (d * d / (16.0 * s2 * s2) - 1.0 / (4.0 * s2)) * delta;
            OverlapDerivatives { delta, gamma, beta }
        }
        PsfModel::Sampled(s) => {
            let w = s.inner.sigma_eff_x;
            let h1 = GAMMA_STEP_WIDTHS * w;
            let h2 = BETA_STEP_WIDTHS * w;
            let delta = s.overlap_complex(d).re;
            let gamma = (s.overlap_complex(d + h1).re - s.overlap_complex(d - h1).re) / (2.0 * h1);
            let beta = (s.overlap_complex(d + h2).re - 2.0 * delta + s.overlap_complex(d - h2).re)
                / (h2 * h2);
            OverlapDerivatives { delta, gamma, beta }
        }
    }
}

#[derive(Debug)]
struct SampledInner {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    /// Row-major samples, index `iy * nx + ix`; grid centered on the origin.
    values: Vec<Complex64>,
    /// Quadrature of `|ψ|²` over the grid.
    norm: f64,
    /// RMS width of `|ψ|²` along x.
    sigma_eff_x: f64,
    /// Half-extent of the grid along x.
    half_extent_x: f64,
    /// Spatial frequencies and non-negative spectral weights of the
    /// y-integrated x-autocorrelation; `δ(d) = Σ_m s_m e^{−i k_m d} / norm`.
    spectrum_k: Vec<f64>,
    spectrum_s: Vec<f64>,
}

/// A PSF sampled on a uniform, origin-centered grid.
///
/// The overlap is evaluated as the tensor-product quadrature of
/// `ψ*(ρ) ψ(ρ − (d,0))` over the grid, with the shifted factor interpolated
/// trigonometrically. Equivalently, by the discrete autocorrelation theorem,
/// `δ(d) = Σ_m s_m e^{−i k_m d}` with non-negative weights `s_m`, which keeps
/// `|δ(d)| ≤ δ(0) = 1` exact and makes δ smooth in `d`.
#[derive(Debug, Clone)]
pub struct SampledPsf {
    inner: Arc<SampledInner>,
}

impl SampledPsf {
    /// Build from a row-major grid of `nx * ny` complex samples with spacings
    /// `dx`, `dy`. Fails unless the grid is unit-normalized, inversion
    /// symmetric, fine enough to resolve the PSF, and wide enough that the
    /// truncated tails are negligible.
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, values: Vec<Complex64>) -> Result<Self> {
        if nx < 4 || ny < 4 || nx > 4096 || ny > 4096 {
            return Err(Error::PsfConfiguration(format!(
                "grid must be between 4x4 and 4096x4096, got {nx}x{ny}"
            )));
        }
        if !(dx.is_finite() && dy.is_finite()) || dx <= 0.0 || dy <= 0.0 {
            return Err(Error::PsfConfiguration(format!(
                "grid spacings must be finite and positive, got dx={dx}, dy={dy}"
            )));
        }
        if values.len() != nx * ny {
            return Err(Error::PsfConfiguration(format!(
                "expected {} samples for a {nx}x{ny} grid, got {}",
                nx * ny,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { what: "psf sample" });
        }

        let weight = dx * dy;
        let mut norm = 0.0;
        let mut x2 = 0.0;
        let mut y2 = 0.0;
        let cx = (nx as f64 - 1.0) / 2.0;
        let cy = (ny as f64 - 1.0) / 2.0;
        for iy in 0..ny {
            let y = (iy as f64 - cy) * dy;
            for ix in 0..nx {
                let x = (ix as f64 - cx) * dx;
                let p = values[iy * nx + ix].norm_sqr() * weight;
                norm += p;
                x2 += x * x * p;
                y2 += y * y * p;
            }
        }
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::PsfConfiguration(format!(
                "grid is not unit-normalized: quadrature of |psi|^2 = {norm:.12}"
            )));
        }
        for iy in 0..ny {
            for ix in 0..nx {
                let a = values[iy * nx + ix];
                let b = values[(ny - 1 - iy) * nx + (nx - 1 - ix)];
                if (a - b).norm() > SYMMETRY_TOL {
                    return Err(Error::PsfConfiguration(format!(
                        "not inversion symmetric at grid point ({ix},{iy}): |psi(rho) - psi(-rho)| = {:e}",
                        (a - b).norm()
                    )));
                }
            }
        }

        let sigma_eff_x = (x2 / norm).sqrt();
        let sigma_eff_y = (y2 / norm).sqrt();
        if dx > sigma_eff_x / 2.0 {
            return Err(Error::PsfConfiguration(format!(
                "grid too coarse to resolve shifts: dx = {dx} exceeds half the effective width {sigma_eff_x}"
            )));
        }
        let half_x = cx * dx;
        let half_y = cy * dy;
        if half_x < MIN_EXTENT_WIDTHS * sigma_eff_x || half_y < MIN_EXTENT_WIDTHS * sigma_eff_y {
            return Err(Error::PsfConfiguration(format!(
                "grid half-extent ({half_x:.3}, {half_y:.3}) is below {MIN_EXTENT_WIDTHS} effective widths ({sigma_eff_x:.3}, {sigma_eff_y:.3})"
            )));
        }

        let (spectrum_k, spectrum_s) = spectrum(nx, ny, dx, dy, &values);
        Ok(SampledPsf {
            inner: Arc::new(SampledInner {
                nx,
                ny,
                dx,
                dy,
                values,
                norm,
                sigma_eff_x,
                half_extent_x: half_x,
                spectrum_k,
                spectrum_s,
            }),
        })
    }

    /// Sample the Gaussian PSF of half-width `sigma` on an `n×n` grid of
    /// half-extent `half_extent`. Intended for tests and examples.
    pub fn gaussian(sigma: f64, half_extent: f64, n: usize) -> Result<Self> {
        if !(sigma.is_finite() && half_extent.is_finite()) || sigma <= 0.0 || half_extent <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "sampled gaussian",
                why: "sigma and half_extent must be positive and finite".into(),
            });
        }
        let step = 2.0 * half_extent / (n as f64 - 1.0);
        let c = (n as f64 - 1.0) / 2.0;
        let amp = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            let y = (iy as f64 - c) * step;
            for ix in 0..n {
                let x = (ix as f64 - c) * step;
                let r2 = x * x + y * y;
                values.push(Complex64::new(amp * (-r2 / (4.0 * sigma * sigma)).exp(), 0.0));
            }
        }
        SampledPsf::new(n, n, step, step, values)
    }

    /// Load from a CSV grid file.
    ///
    /// The first data line holds `nx,ny,dx,dy`; each following line holds
    /// `ix,iy,re,im` with `0 <= ix < nx`, `0 <= iy < ny`. Every grid point must
    /// appear exactly once. Lines starting with `#` are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

        let header = lines
            .next()
            .ok_or_else(|| Error::PsfFile("empty file".into()))?;
        let head: Vec<&str> = header.split(',').map(str::trim).collect();
        if head.len() != 4 {
            return Err(Error::PsfFile(format!(
                "header must be `nx,ny,dx,dy`, got `{header}`"
            )));
        }
        let nx: usize = head[0]
            .parse()
            .map_err(|_| Error::PsfFile(format!("bad nx `{}`", head[0])))?;
        let ny: usize = head[1]
            .parse()
            .map_err(|_| Error::PsfFile(format!("bad ny `{}`", head[1])))?;
        let dx: f64 = head[2]
            .parse()
            .map_err(|_| Error::PsfFile(format!("bad dx `{}`", head[2])))?;
        let dy: f64 = head[3]
            .parse()
            .map_err(|_| Error::PsfFile(format!("bad dy `{}`", head[3])))?;
        if nx == 0 || ny == 0 || nx.checked_mul(ny).is_none() {
            return Err(Error::PsfFile(format!("bad grid dimensions {nx}x{ny}")));
        }

        let mut values = vec![Complex64::new(f64::NAN, 0.0); nx * ny];
        let mut seen = vec![false; nx * ny];
        for line in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(Error::PsfFile(format!(
                    "data line must be `ix,iy,re,im`, got `{line}`"
                )));
            }
            let ix: usize = cells[0]
                .parse()
                .map_err(|_| Error::PsfFile(format!("bad ix `{}`", cells[0])))?;
            let iy: usize = cells[1]
                .parse()
                .map_err(|_| Error::PsfFile(format!("bad iy `{}`", cells[1])))?;
            let re: f64 = cells[2]
                .parse()
                .map_err(|_| Error::PsfFile(format!("bad re `{}`", cells[2])))?;
            let im: f64 = cells[3]
                .parse()
                .map_err(|_| Error::PsfFile(format!("bad im `{}`", cells[3])))?;
            if ix >= nx || iy >= ny {
                return Err(Error::PsfFile(format!(
                    "grid index ({ix},{iy}) out of bounds for {nx}x{ny}"
                )));
            }
            let k = iy * nx + ix;
            if seen[k] {
                return Err(Error::PsfFile(format!("duplicate grid point ({ix},{iy})")));
            }
            seen[k] = true;
            values[k] = Complex64::new(re, im);
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::PsfFile(format!(
                "missing grid point ({},{})",
                k % nx,
                k / nx
            )));
        }
        SampledPsf::new(nx, ny, dx, dy, values)
    }

    /// Load from a CSV grid file on disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        SampledPsf::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Complex overlap `Σ_m s_m e^{−i k_m d} / norm`. The imaginary part is a
    /// quadrature residual that vanishes for inversion-symmetric PSFs.
    pub fn overlap_complex(&self, d: f64) -> Complex64 {
        let inner = &self.inner;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, s) in inner.spectrum_k.iter().zip(&inner.spectrum_s) {
            let (sin, cos) = (k * d).sin_cos();
            re += s * cos;
            im -= s * sin;
        }
        let total: f64 = inner.spectrum_s.iter().sum();
        Complex64::new(re / total, im / total)
    }

    pub fn nx(&self) -> usize {
        self.inner.nx
    }

    pub fn ny(&self) -> usize {
        self.inner.ny
    }

    pub fn dx(&self) -> f64 {
        self.inner.dx
    }

    pub fn dy(&self) -> f64 {
        self.inner.dy
    }

    /// Quadrature of `|ψ|²` over the grid.
    pub fn norm(&self) -> f64 {
        self.inner.norm
    }

    /// Largest shift the grid resolves cleanly. The trigonometric shift is
    /// periodic over the grid, so correlation mass from the opposite edge
    /// contaminates shifts close to the half-extent; stopping two effective
    /// widths short keeps that below ~e^{-extent/width} in relative terms.
    pub fn resolvable_shift(&self) -> f64 {
        self.inner.half_extent_x - 2.0 * self.inner.sigma_eff_x
    }
}

/// Spectral weights of the y-integrated x-autocorrelation:
/// `s_m = (dy / (nx dx)) Σ_y |Ψ_y(k_m)|²` with
/// `Ψ_y(k) = dx Σ_x ψ(x, y) e^{−i k x}` and `k_m = 2π m̃ / (nx dx)`.
fn spectrum(nx: usize, ny: usize, dx: f64, dy: f64, values: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let cx = (nx as f64 - 1.0) / 2.0;
    // Phase table e^{−i k_m x_j}, indexed m * nx + j.
    let mut phases = Vec::with_capacity(nx * nx);
    let mut ks = Vec::with_capacity(nx);
    for m in 0..nx {
        let m_signed = if m <= nx / 2 { m as f64 } else { m as f64 - nx as f64 };
        let k = 2.0 * std::f64::consts::PI * m_signed / (nx as f64 * dx);
        ks.push(k);
        for j in 0..nx {
            let x = (j as f64 - cx) * dx;
            let (sin, cos) = (k * x).sin_cos();
            phases.push(Complex64::new(cos, -sin));
        }
    }
    let mut s = vec![0.0; nx];
    for iy in 0..ny {
        let row = &values[iy * nx..(iy + 1) * nx];
        for m in 0..nx {
            let mut acc = Complex64::new(0.0, 0.0);
            let ph = &phases[m * nx..(m + 1) * nx];
            for (v, p) in row.iter().zip(ph) {
                acc += v * p;
            }
            s[m] += acc.norm_sqr();
        }
    }
    let scale = dx * dx * dy / (nx as f64 * dx);
    for sm in &mut s {
        *sm *= scale;
    }
    (ks, s)
}
