//! Semiclassical Monte Carlo of the photodetection process.
//!
//! Conditioned on the pair of thermal source amplitudes, every scheme's
//! detector record is elementary: Poisson counts with the conditional rates
//! (direct imaging, fin-SPADE) or independent on/off clicks (pix-SLIVER).
//! Sampling the amplitudes and then the records reproduces the full
//! unconditional statistics, which validates the analytic moments and feeds
//! the maximum-likelihood estimator benchmarks.
//!
//! Trials are seeded per index from a master seed, so batches are
//! reproducible bit-for-bit and may be generated in parallel in any order.

mod likelihood;

pub use likelihood::{log_likelihood, ml_estimate, MlEstimate};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fisher::MomentSet;
use crate::measurement::{
    coefficients_di, coefficients_sliver, di_conditional_means, di_moments,
    sliver_conditional_intensities, sliver_moments, spade_conditional_means, spade_moments,
    weights_spade, DetectorGeometry, SCHEME_DI, SCHEME_SLIVER, SCHEME_SPADE,
};
use crate::quantum::Scene;

/// Measurement scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    DirectImaging,
    FinSpade,
    PixSliver,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::DirectImaging => SCHEME_DI,
            Scheme::FinSpade => SCHEME_SPADE,
            Scheme::PixSliver => SCHEME_SLIVER,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            SCHEME_DI => Ok(Scheme::DirectImaging),
            SCHEME_SPADE => Ok(Scheme::FinSpade),
            SCHEME_SLIVER => Ok(Scheme::PixSliver),
            other => Err(Error::InvalidArgument {
                what: "scheme",
                why: format!("unknown scheme `{other}` (expected di, spade, or sliver)"),
            }),
        }
    }
}

/// A measurement scheme together with its detector parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementSetup {
    DirectImaging { geometry: DetectorGeometry },
    FinSpade { q_max: usize },
    PixSliver { geometry: DetectorGeometry },
}

impl MeasurementSetup {
    pub fn scheme(&self) -> Scheme {
        match self {
            MeasurementSetup::DirectImaging { .. } => Scheme::DirectImaging,
            MeasurementSetup::FinSpade { .. } => Scheme::FinSpade,
            MeasurementSetup::PixSliver { .. } => Scheme::PixSliver,
        }
    }

    /// Length of one observation record.
    pub fn dimension(&self) -> usize {
        match self {
            MeasurementSetup::DirectImaging { geometry } => geometry.pixels(),
            MeasurementSetup::FinSpade { q_max } => q_max + 1,
            MeasurementSetup::PixSliver { geometry } => 2 * geometry.pixels(),
        }
    }

    /// Analytic moments of this setup for the given scene.
    pub fn moments(&self, scene: &Scene) -> Result<MomentSet> {
        match self {
            MeasurementSetup::DirectImaging { geometry } => di_moments(scene, geometry),
            MeasurementSetup::FinSpade { q_max } => spade_moments(scene, *q_max),
            MeasurementSetup::PixSliver { geometry } => sliver_moments(scene, geometry),
        }
    }
}

/// One draw of the two thermal source amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceAmplitudes {
    pub a_plus: Complex64,
    pub a_minus: Complex64,
}

impl SourceAmplitudes {
    /// Sum amplitude `S = A₊ + A₋`; couples to the symmetric field component.
    pub fn sum(&self) -> Complex64 {
        self.a_plus + self.a_minus
    }

    /// Difference amplitude `D = A₊ − A₋`; couples to the antisymmetric one.
    pub fn difference(&self) -> Complex64 {
        self.a_plus - self.a_minus
    }
}

/// Draw `A₊, A₋` i.i.d. circular complex Gaussian with `E|A|² = n_s`.
pub fn sample_amplitudes<R: Rng + ?Sized>(n_s: f64, rng: &mut R) -> SourceAmplitudes {
    let q = (n_s / 2.0).sqrt();
    let mut draw = || -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(q * re, q * im)
    };
    SourceAmplitudes {
        a_plus: draw(),
        a_minus: draw(),
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial generator derived from `(master_seed, trial)`; trials are
/// independent streams, so batches may be produced in any order.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ trial.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// One simulated detection outcome with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    /// Counts (direct imaging, fin-SPADE) or 0/1 clicks (pix-SLIVER), in the
    /// component order of the corresponding [`MomentSet`].
    pub outcome: Vec<u32>,
    pub scene: Scene,
    /// Master seed of the batch this record belongs to.
    pub seed: u64,
    pub trial: u64,
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let v: f64 = d.sample(rng);
    v as u32
}

/// Simulate a single detection record.
pub fn simulate_trial(
    scene: &Scene,
    setup: &MeasurementSetup,
    master_seed: u64,
    trial: u64,
) -> Result<TrialRecord> {
    let mut rng = trial_rng(master_seed, trial);
    let amps = sample_amplitudes(scene.n_s(), &mut rng);
    let outcome = match setup {
        MeasurementSetup::DirectImaging { geometry } => {
            let c = coefficients_di(scene, geometry)?;
            di_conditional_means(&c, amps.a_plus, amps.a_minus)
                .into_iter()
                .map(|m| poisson_count(m, &mut rng))
                .collect()
        }
        MeasurementSetup::FinSpade { q_max } => {
            let w = weights_spade(scene, *q_max)?;
            spade_conditional_means(&w, amps.sum(), amps.difference())
                .into_iter()
                .map(|m| poisson_count(m, &mut rng))
                .collect()
        }
        MeasurementSetup::PixSliver { geometry } => {
            let c = coefficients_sliver(scene, geometry)?;
            let (i_sym, i_asym) = sliver_conditional_intensities(&c, amps.sum(), amps.difference());
            i_sym
                .into_iter()
                .chain(i_asym)
                .map(|i| {
                    let p_click = -(-i).exp_m1(); // 1 - exp(-I)
                    u32::from(rng.random::<f64>() < p_click)
                })
                .collect()
        }
    };
    Ok(TrialRecord {
        scheme: setup.scheme(),
        outcome,
        scene: scene.clone(),
        seed: master_seed,
        trial,
    })
}

/// Simulate `trials` records in parallel; element `i` is trial `i`.
pub fn simulate_batch(
    scene: &Scene,
    setup: &MeasurementSetup,
    master_seed: u64,
    trials: u64,
) -> Result<Vec<TrialRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|t| simulate_trial(scene, setup, master_seed, t))
        .collect()
}

/// Sample mean and covariance of a record batch with jackknife standard
/// errors on every entry.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub mean: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_se: DMatrix<f64>,
    pub trials: usize,
}

/// Estimate mean and covariance from a homogeneous batch of ≥ 2 records.
///
/// The covariance uses the unbiased (n−1) normalization. Standard errors are
/// delete-one jackknife; for the mean this coincides with `sd/√n`, and for
/// covariance entries the leave-one-out estimates have the closed form
/// `cov_i = [(n−1) cov − n δᵢδᵢᵀ/(n−1)]/(n−2)` in terms of the deviations
/// `δᵢ`, so no per-trial re-estimation is needed.
pub fn empirical_moments(records: &[TrialRecord]) -> Result<EmpiricalMoments> {
    let n = records.len();
    if n < 2 {
        return Err(Error::HeterogeneousRecords(format!(
            "need at least 2 records, got {n}"
        )));
    }
    let first = &records[0];
    let p = first.outcome.len();
    for r in records {
        if r.scheme != first.scheme || r.outcome.len() != p || r.scene != first.scene {
            return Err(Error::HeterogeneousRecords(
                "records mix schemes, scenes, or outcome dimensions".into(),
            ));
        }
    }

    // Fixed-size chunking keeps the parallel reduction order deterministic.
    let chunk = 4096;
    let nf = n as f64;

    let sum: Vec<f64> = records
        .par_chunks(chunk)
        .map(|rs| {
            let mut acc = vec![0.0; p];
            for r in rs {
                for (a, &o) in acc.iter_mut().zip(&r.outcome) {
                    *a += o as f64;
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0.0; p], |mut acc, part| {
            for (a, b) in acc.iter_mut().zip(part) {
                *a += b;
            }
            acc
        });
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();

    // second pass: S2 = sum of outer products of deviations, S4 = entrywise
    // sum of their squares (for the jackknife spread)
    let (s2, s4) = records
        .par_chunks(chunk)
        .map(|rs| {
            let mut s2 = vec![0.0; p * p];
            let mut s4 = vec![0.0; p * p];
            let mut delta = vec![0.0; p];
            for r in rs {
                for (dl, (&o, m)) in delta.iter_mut().zip(r.outcome.iter().zip(&mean)) {
                    *dl = o as f64 - m;
                }
                for i in 0..p {
                    let di = delta[i];
                    for j in i..p {
                        let u = di * delta[j];
                        s2[i * p + j] += u;
                        s4[i * p + j] += u * u;
                    }
                }
            }
            (s2, s4)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((vec![0.0; p * p], vec![0.0; p * p]), |(mut a2, mut a4), (b2, b4)| {
            for (a, b) in a2.iter_mut().zip(b2) {
                *a += b;
            }
            for (a, b) in a4.iter_mut().zip(b4) {
                *a += b;
            }
            (a2, a4)
        });

    let mut cov = DMatrix::zeros(p, p);
    let mut cov_se = DMatrix::zeros(p, p);
    let b = nf / ((nf - 1.0) * (nf - 2.0));
    for i in 0..p {
        for j in i..p {
            let s2ij = s2[i * p + j];
            let c = s2ij / (nf - 1.0);
            let spread = (s4[i * p + j] - s2ij * s2ij / nf).max(0.0);
            let se = ((nf - 1.0) / nf * b * b * spread).sqrt();
            cov[(i, j)] = c;
            cov[(j, i)] = c;
            cov_se[(i, j)] = se;
            cov_se[(j, i)] = se;
        }
    }
    let mean_se =
        DVector::from_iterator(p, (0..p).map(|i| (cov[(i, i)] / nf).max(0.0).sqrt()));
    Ok(EmpiricalMoments {
        mean: DVector::from_vec(mean),
        mean_se,
        cov,
        cov_se,
        trials: n,
    })
}

/// Worst z-scores of a sample-vs-analytic moment comparison.
#[derive(Debug, Clone, Copy)]
pub struct MomentComparison {
    pub max_mean_z: f64,
    pub max_cov_z: f64,
    /// Largest cross-block covariance z-score (components whose analytic
    /// covariance is exactly zero), or 0 when there is a single block.
    pub max_cross_block_cov_z: f64,
}

/// Compare empirical moments against analytic ones in units of standard
/// errors.
///
/// The denominator of each z-score is the jackknife standard error, floored
/// by the analytic sampling error (`sqrt(C_ii/n)` for means,
/// `sqrt((C_ii C_jj + C_ij²)/n)` for covariances) and by `2.5/n`. The floors
/// carry the components that fired rarely or never: a zero-event component
/// has zero jackknife spread, and its analytic moments of order up to
/// `~1/n` are statistically consistent with the empty sample.
pub fn compare_moments(em: &EmpiricalMoments, analytic: &MomentSet) -> Result<MomentComparison> {
    let p = analytic.len();
    if em.mean.len() != p {
        return Err(Error::InvalidArgument {
            what: "moment comparison",
            why: format!("dimension {} vs {}", em.mean.len(), p),
        });
    }
    let n = em.trials as f64;
    let abs_floor = 2.5 / n;
    let mut max_mean_z = 0.0_f64;
    let mut max_cov_z = 0.0_f64;
    let mut max_cross_z = 0.0_f64;
    for i in 0..p {
        let denom = em.mean_se[i]
            .max((analytic.cov()[(i, i)].max(0.0) / n).sqrt())
            .max(abs_floor);
        max_mean_z = max_mean_z.max((em.mean[i] - analytic.mean()[i]).abs() / denom);
    }
    for i in 0..p {
        for j in i..p {
            let cii = analytic.cov()[(i, i)].max(0.0);
            let cjj = analytic.cov()[(j, j)].max(0.0);
            let cij = analytic.cov()[(i, j)];
            let denom = em.cov_se[(i, j)]
                .max(((cii * cjj + cij * cij) / n).sqrt())
                .max(abs_floor);
            let z = (em.cov[(i, j)] - cij).abs() / denom;
            max_cov_z = max_cov_z.max(z);
            if analytic.labels()[i].block != analytic.labels()[j].block {
                max_cross_z = max_cross_z.max(z);
            }
        }
    }
    Ok(MomentComparison {
        max_mean_z,
        max_cov_z,
        max_cross_block_cov_z: max_cross_z,
    })
}

/// Write a record batch as CSV with columns
/// `scheme,seed,trial,component_index,value`.
pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: &mut W) -> Result<()> {
    writeln!(out, "scheme,seed,trial,component_index,value")?;
    for r in records {
        for (i, &v) in r.outcome.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", r.scheme.as_str(), r.seed, r.trial, i, v)?;
        }
    }
    Ok(())
}

/// JSON sidecar describing the scene and detector of a record batch.
pub fn sidecar_json(
    scene: &Scene,
    setup: &MeasurementSetup,
    master_seed: u64,
    trials: u64,
) -> serde_json::Value {
    let psf = match scene.psf() {
        crate::psf::PsfModel::Gaussian { sigma } => serde_json::json!({
            "kind": "gaussian",
            "sigma": sigma,
        }),
        crate::psf::PsfModel::Sampled(s) => serde_json::json!({
            "kind": "numeric_sampled",
            "nx": s.nx(), "ny": s.ny(), "dx": s.dx(), "dy": s.dy(),
        }),
    };
    let setup_json = match setup {
        MeasurementSetup::DirectImaging { geometry } => serde_json::json!({
            "scheme": SCHEME_DI,
            "detector_width": geometry.width(),
            "pixels": geometry.pixels(),
        }),
        MeasurementSetup::FinSpade { q_max } => serde_json::json!({
            "scheme": SCHEME_SPADE,
            "q_max": q_max,
        }),
        MeasurementSetup::PixSliver { geometry } => serde_json::json!({
            "scheme": SCHEME_SLIVER,
            "detector_width": geometry.width(),
            "pixels_per_arm": geometry.pixels(),
        }),
    };
    serde_json::json!({
        "scene": { "n_s": scene.n_s(), "d": scene.d(), "psf": psf },
        "measurement": setup_json,
        "master_seed": master_seed,
        "trials": trials,
    })
}
