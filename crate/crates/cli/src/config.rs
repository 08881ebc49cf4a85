//! Run configuration: a single JSON document, overridable field by field
//! from the command line (flags take precedence over the file, the file over
//! the built-in defaults).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Separation grids are expressed in units of the PSF half-width σ; the zero
/// point of a grid is replaced by this value before bound evaluation, since
/// the measurement moment formulas are 0/0 limits at d = 0 exactly.
pub const D_ZERO_REPLACEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Per-source mean photon number.
    pub n_s: f64,
    /// Gaussian PSF half-width (sets the length unit of all outputs).
    pub sigma: f64,
    /// Source strengths for multi-curve outputs (`qfi`, figure 2).
    pub ns_set: Vec<f64>,
    /// Separation for `simulate`, in units of σ.
    pub d: f64,
    /// Separation grid for sweeps, in units of σ.
    pub d_min: f64,
    pub d_max: f64,
    pub d_steps: usize,
    /// Highest Hermite-Gaussian mode order for fin-SPADE.
    pub q_max: usize,
    /// Mode cutoffs of the fin-SPADE curves (figure 4).
    pub q_set: Vec<usize>,
    /// Pixels per pix-SLIVER arm.
    pub pixels: usize,
    /// Pixel counts of the pix-SLIVER curves (figure 6).
    pub p_set: Vec<usize>,
    /// Pixels of the direct-imaging array.
    pub pixels_di: usize,
    /// Detector width in units of σ.
    pub width_sigmas: f64,
    /// Monte Carlo trials for `simulate`.
    pub trials: u64,
    /// Estimator benchmark size (enabled with `estimate`).
    pub estimates: u64,
    pub records_per_estimate: u64,
    pub estimate: bool,
    /// Upper end of the ML search interval, in units of σ.
    pub search_max_sigmas: f64,
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_s: 1.5,
            sigma: 1.0,
            ns_set: vec![0.1, 1.5, 5.0],
            d: 2.0,
            d_min: 0.0,
            d_max: 6.0,
            d_steps: 121,
            q_max: 5,
            q_set: vec![1, 2, 5],
            pixels: 40,
            p_set: vec![2, 6, 40],
            pixels_di: 50,
            width_sigmas: 17.0,
            trials: 100_000,
            estimates: 200,
            records_per_estimate: 1000,
            estimate: false,
            search_max_sigmas: 8.0,
            seed: 20170401,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Validity of every field, reported with its path.
    pub fn validate(&self) -> Result<()> {
        if !self.n_s.is_finite() || self.n_s < 0.0 {
            bail!("config.n_s must be finite and >= 0, got {}", self.n_s);
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            bail!("config.sigma must be finite and > 0, got {}", self.sigma);
        }
        if self.ns_set.is_empty() {
            bail!("config.ns_set must not be empty");
        }
        for (i, v) in self.ns_set.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                bail!("config.ns_set[{i}] must be finite and >= 0, got {v}");
            }
        }
        if !self.d.is_finite() || self.d < 0.0 {
            bail!("config.d must be finite and >= 0, got {}", self.d);
        }
        if !self.d_min.is_finite() || self.d_min < 0.0 {
            bail!("config.d_min must be finite and >= 0, got {}", self.d_min);
        }
        if !self.d_max.is_finite() || self.d_max <= self.d_min {
            bail!(
                "config.d_max must be finite and > d_min, got {} vs {}",
                self.d_max,
                self.d_min
            );
        }
        if self.d_steps < 2 {
            bail!("config.d_steps must be >= 2, got {}", self.d_steps);
        }
        if self.d_min == 0.0
            && (self.d_max / (self.d_steps - 1) as f64) <= D_ZERO_REPLACEMENT
        {
            bail!(
                "config.d_max/d_steps: grid spacing {} would fall below the zero-point replacement {}",
                self.d_max / (self.d_steps - 1) as f64,
                D_ZERO_REPLACEMENT
            );
        }
        if self.q_set.is_empty() {
            bail!("config.q_set must not be empty");
        }
        if self.p_set.is_empty() {
            bail!("config.p_set must not be empty");
        }
        for (name, v) in [
            ("config.pixels", self.pixels),
            ("config.pixels_di", self.pixels_di),
        ] {
            if v == 0 {
                bail!("{name} must be >= 1");
            }
        }
        for (i, p) in self.p_set.iter().enumerate() {
            if *p == 0 {
                bail!("config.p_set[{i}] must be >= 1");
            }
        }
        if !self.width_sigmas.is_finite() || self.width_sigmas <= 0.0 {
            bail!(
                "config.width_sigmas must be finite and > 0, got {}",
                self.width_sigmas
            );
        }
        if self.trials == 0 {
            bail!("config.trials must be >= 1");
        }
        if self.estimates == 0 {
            bail!("config.estimates must be >= 1");
        }
        if self.records_per_estimate == 0 {
            bail!("config.records_per_estimate must be >= 1");
        }
        if !self.search_max_sigmas.is_finite() || self.search_max_sigmas <= 0.0 {
            bail!(
                "config.search_max_sigmas must be finite and > 0, got {}",
                self.search_max_sigmas
            );
        }
        Ok(())
    }

    /// The separation grid in units of σ, with the zero point replaced by
    /// [`D_ZERO_REPLACEMENT`].
    pub fn d_grid(&self) -> Vec<f64> {
        (0..self.d_steps)
            .map(|i| {
                let x = self.d_min
                    + (self.d_max - self.d_min) * i as f64 / (self.d_steps - 1) as f64;
                if x == 0.0 {
                    D_ZERO_REPLACEMENT
                } else {
                    x
                }
            })
            .collect()
    }

    /// Manifest fragment with every scene/sweep parameter.
    pub fn manifest_params(&self) -> serde_json::Value {
        serde_json::json!({
            "n_s": self.n_s,
            "sigma": self.sigma,
            "ns_set": self.ns_set,
            "d": self.d,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "d_steps": self.d_steps,
            "d_zero_replacement": D_ZERO_REPLACEMENT,
            "q_max": self.q_max,
            "q_set": self.q_set,
            "pixels": self.pixels,
            "p_set": self.p_set,
            "pixels_di": self.pixels_di,
            "width_sigmas": self.width_sigmas,
            "trials": self.trials,
            "estimates": self.estimates,
            "records_per_estimate": self.records_per_estimate,
            "estimate": self.estimate,
            "search_max_sigmas": self.search_max_sigmas,
            "seed": self.seed,
        })
    }
}
