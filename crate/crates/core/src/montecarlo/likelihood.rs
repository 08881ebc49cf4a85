//! Marginal record likelihoods and maximum-likelihood separation estimation.
//!
//! Conditioned on the thermal amplitudes the records are products of Poisson
//! or Bernoulli factors; the per-record likelihood marginalizes the
//! amplitudes out. For fin-SPADE the even and odd modes each couple to one
//! exponentially distributed intensity, and the mixture integral has a closed
//! gamma-function form per parity block. For pix-SLIVER each arm's click
//! pattern couples to its own exponential intensity and the one-dimensional
//! mixture integral is evaluated by composite Gauss-Legendre quadrature.
//! Direct imaging is not supported here: its conditional intensity depends on
//! the relative source phase as well, so the marginal needs a 3D integral per
//! candidate separation, and direct imaging is benchmarked through the moment
//! bound instead.

use std::collections::HashMap;
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measurement::{weights_spade, SpadeWeights};
use crate::psf::PsfModel;
use crate::quantum::Scene;

use super::{MeasurementSetup, TrialRecord};

/// Upper end of the unit-mean exponential quadrature range; the neglected
/// tail mass e^{−30} ≈ 9.4e-14 stays below the 1e-12 accuracy target.
const QUAD_T_MAX: f64 = 30.0;
const QUAD_PANELS: [f64; 8] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, QUAD_T_MAX];
const GL_POINTS: usize = 64;
/// Agreement required between the panel rule and its half-width refinement.
const QUAD_CHECK_REL: f64 = 1e-10;
const QUAD_CHECK_ABS: f64 = 1e-12;

/// Maximum-likelihood estimate of the separation from a record batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub d_hat: f64,
    /// Summed log-likelihood at `d_hat`.
    pub log_likelihood: f64,
    /// Set when the maximum sits on the search-interval boundary (flat or
    /// monotone likelihood); the estimate is then one-sided.
    pub boundary: bool,
}

/// Exact marginal log-likelihood of one record at a candidate separation.
///
/// `n_s` and the PSF describe the scene apart from the separation under test.
pub fn log_likelihood(
    setup: &MeasurementSetup,
    outcome: &[u32],
    candidate_d: f64,
    n_s: f64,
    psf: &PsfModel,
) -> Result<f64> {
    if !candidate_d.is_finite() {
        return Err(Error::NonFinite { what: "candidate_d" });
    }
    if candidate_d < 0.0 {
        return Err(Error::InvalidArgument {
            what: "candidate_d",
            why: format!("must be >= 0, got {candidate_d}"),
        });
    }
    if outcome.len() != setup.dimension() {
        return Err(Error::InvalidArgument {
            what: "outcome",
            why: format!(
                "length {} does not match the measurement dimension {}",
                outcome.len(),
                setup.dimension()
            ),
        });
    }
    let scene = Scene::new(n_s, candidate_d, psf.clone())?;
    match setup {
        MeasurementSetup::FinSpade { q_max } => {
            let w = weights_spade(&scene, *q_max)?;
            Ok(spade_record_log_likelihood(&w, outcome, n_s))
        }
        MeasurementSetup::PixSliver { geometry } => {
            let c = crate::measurement::coefficients_sliver(&scene, geometry)?;
            let p = geometry.pixels();
            let sym = arm_log_likelihood(&c.f_sym, &outcome[..p], n_s)?;
            let asym = arm_log_likelihood(&c.f_asym, &outcome[p..], n_s)?;
            Ok(sym + asym)
        }
        MeasurementSetup::DirectImaging { .. } => Err(Error::UnsupportedModel {
            scheme: "di",
            why: "the marginal likelihood requires a 3D amplitude integral; \
                  direct imaging is benchmarked via the moment bound"
                .into(),
        }),
    }
}

/// Maximize the summed log-likelihood of a homogeneous record batch over
/// `search = (lo, hi)` by a 64-point coarse scan followed by golden-section
/// refinement to 1e-4 PSF widths.
pub fn ml_estimate(
    setup: &MeasurementSetup,
    records: &[TrialRecord],
    search: (f64, f64),
) -> Result<MlEstimate> {
    let (lo, hi) = search;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite { what: "search interval" });
    }
    if lo < 0.0 || hi <= lo {
        return Err(Error::InvalidArgument {
            what: "search interval",
            why: format!("need 0 <= lo < hi, got ({lo}, {hi})"),
        });
    }
    let first = records.first().ok_or(Error::InvalidArgument {
        what: "records",
        why: "need at least one record".into(),
    })?;
    let dim = setup.dimension();
    for r in records {
        if r.scheme != setup.scheme() || r.outcome.len() != dim || r.scene != first.scene {
            return Err(Error::HeterogeneousRecords(
                "records mix schemes, scenes, or outcome dimensions".into(),
            ));
        }
    }
    let n_s = first.scene.n_s();
    let psf = first.scene.psf().clone();

    let mut objective: Box<dyn FnMut(f64) -> Result<f64>> = match setup {
        MeasurementSetup::FinSpade { q_max } => {
            let agg = SpadeAggregate::from_records(records, *q_max);
            let psf = psf.clone();
            Box::new(move |d: f64| {
                let scene = Scene::new(n_s, d, psf.clone())?;
                let w = weights_spade(&scene, agg.q_max)?;
                Ok(agg.log_likelihood(&w, n_s))
            })
        }
        MeasurementSetup::PixSliver { geometry } => {
            let p = geometry.pixels();
            let mut sym_patterns: HashMap<Vec<u32>, f64> = HashMap::new();
            let mut asym_patterns: HashMap<Vec<u32>, f64> = HashMap::new();
            for r in records {
                *sym_patterns.entry(r.outcome[..p].to_vec()).or_insert(0.0) += 1.0;
                *asym_patterns.entry(r.outcome[p..].to_vec()).or_insert(0.0) += 1.0;
            }
            let geometry = geometry.clone();
            let psf = psf.clone();
            Box::new(move |d: f64| {
                let scene = Scene::new(n_s, d, psf.clone())?;
                let c = crate::measurement::coefficients_sliver(&scene, &geometry)?;
                let mut total = 0.0;
                for (pattern, count) in &sym_patterns {
                    total += count * arm_log_likelihood(&c.f_sym, pattern, n_s)?;
                }
                for (pattern, count) in &asym_patterns {
                    total += count * arm_log_likelihood(&c.f_asym, pattern, n_s)?;
                }
                Ok(total)
            })
        }
        MeasurementSetup::DirectImaging { .. } => {
            return Err(Error::UnsupportedModel {
                scheme: "di",
                why: "maximum-likelihood estimation is not defined for direct imaging here"
                    .into(),
            })
        }
    };

    let grid = 64usize;
    let mut best = (lo, f64::NEG_INFINITY, 0usize);
    for i in 0..grid {
        let d = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let v = objective(d)?;
        if v > best.1 {
            best = (d, v, i);
        }
    }
    let step = (hi - lo) / (grid - 1) as f64;
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let tol = 1e-4 * psf.characteristic_width();
    let d_hat = golden_max(&mut objective, a, b, tol)?;
    let value = objective(d_hat)?;
    // a coarse argmax on an endpoint means the likelihood never rose inside
    // the interval (flat or monotone), which also makes the estimate one-sided
    let boundary =
        best.2 == 0 || best.2 == grid - 1 || d_hat <= lo + tol || d_hat >= hi - tol;
    Ok(MlEstimate {
        d_hat,
        log_likelihood: value,
        boundary,
    })
}

/// Golden-section maximization of a unimodal-enough objective on `[a, b]`.
fn golden_max(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Log-likelihood of one fin-SPADE record.
///
/// Even (odd) mode counts are conditionally Poisson with a common
/// exponentially distributed scale of mean `2N_s`; integrating it out gives,
/// per parity block with weights sum `F` and count total `T`,
///
/// ```text
/// P(block) = [Π_q f_q^{n_q} / n_q!] · T! · (2N)^T / (1 + 2N F)^{T+1}
/// ```
fn spade_record_log_likelihood(w: &SpadeWeights, counts: &[u32], n_s: f64) -> f64 {
    if n_s == 0.0 {
        return if counts.iter().all(|&c| c == 0) {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
    let two_n = 2.0 * n_s;
    let mut ll = 0.0;
    for parity in 0..2 {
        let mut f_total = 0.0;
        let mut t_total = 0.0;
        for (q, (&fq, &cq)) in w.f.iter().zip(counts).enumerate() {
            if q % 2 != parity {
                continue;
            }
            f_total += fq;
            if cq > 0 {
                if fq == 0.0 {
                    return f64::NEG_INFINITY;
                }
                t_total += cq as f64;
                ll += cq as f64 * fq.ln() - ln_gamma(cq as f64 + 1.0);
            }
        }
        ll += ln_gamma(t_total + 1.0) + t_total * two_n.ln()
            - (t_total + 1.0) * (two_n * f_total).ln_1p();
    }
    ll
}

/// Aggregated sufficient statistics of a fin-SPADE record batch: the summed
/// log-likelihood depends on the records only through per-mode count totals,
/// per-block totals, the record count, and an additive constant.
struct SpadeAggregate {
    q_max: usize,
    mode_totals: Vec<f64>,
    records: f64,
    any_counts: bool,
    constant: f64,
}

impl SpadeAggregate {
    fn from_records(records: &[TrialRecord], q_max: usize) -> Self {
        let m = q_max + 1;
        let mut mode_totals = vec![0.0; m];
        let mut constant = 0.0;
        let mut any_counts = false;
        for r in records {
            let mut t = [0.0; 2];
            for (q, &c) in r.outcome.iter().enumerate() {
                if c > 0 {
                    any_counts = true;
                    mode_totals[q] += c as f64;
                    t[q % 2] += c as f64;
                    constant -= ln_gamma(c as f64 + 1.0);
                }
            }
            constant += ln_gamma(t[0] + 1.0) + ln_gamma(t[1] + 1.0);
        }
        SpadeAggregate {
            q_max,
            mode_totals,
            records: records.len() as f64,
            any_counts,
            constant,
        }
    }

    fn log_likelihood(&self, w: &SpadeWeights, n_s: f64) -> f64 {
        if n_s == 0.0 {
            return if self.any_counts { f64::NEG_INFINITY } else { 0.0 };
        }
        let two_n = 2.0 * n_s;
        let mut ll = self.constant;
        for parity in 0..2 {
            let mut f_total = 0.0;
            let mut t_total = 0.0;
            for q in (parity..=self.q_max).step_by(2) {
                f_total += w.f[q];
                let tc = self.mode_totals[q];
                if tc > 0.0 {
                    if w.f[q] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    ll += tc * w.f[q].ln();
                    t_total += tc;
                }
            }
            ll += t_total * two_n.ln() - (t_total + self.records) * (two_n * f_total).ln_1p();
        }
        ll
    }
}

struct QuadRule {
    /// Nodes and weights with the unit-exponential density folded in.
    nodes: Vec<f64>,
    base_weights: Vec<f64>,
}

impl QuadRule {
    fn build(panels: &[f64]) -> Self {
        let (x, w) = gauss_legendre(GL_POINTS);
        let mut nodes = Vec::new();
        let mut base_weights = Vec::new();
        for seg in panels.windows(2) {
            let mid = 0.5 * (seg[0] + seg[1]);
            let half = 0.5 * (seg[1] - seg[0]);
            for (xi, wi) in x.iter().zip(&w) {
                let t = mid + half * xi;
                nodes.push(t);
                base_weights.push(half * wi * (-t).exp());
            }
        }
        QuadRule {
            nodes,
            base_weights,
        }
    }
}

fn quad_rules() -> &'static (QuadRule, QuadRule) {
    static RULES: OnceLock<(QuadRule, QuadRule)> = OnceLock::new();
    RULES.get_or_init(|| {
        let coarse = QuadRule::build(&QUAD_PANELS);
        let mut refined = Vec::with_capacity(2 * QUAD_PANELS.len() - 1);
        for seg in QUAD_PANELS.windows(2) {
            refined.push(seg[0]);
            refined.push(0.5 * (seg[0] + seg[1]));
        }
        refined.push(QUAD_T_MAX);
        (coarse, QuadRule::build(&refined))
    })
}

/// Marginal log-likelihood of one arm's click pattern.
///
/// With `x` the arm's exponential intensity scale substituted as `x = 2N t`,
///
/// ```text
/// L = ∫_0^∞ e^{−t} · e^{−N t F_dark / 2} · Π_{p clicked} (1 − e^{−N t f_p / 2}) dt,
/// ```
///
/// `F_dark` summing the coefficients of unclicked pixels. The integrand is
/// entire and evaluated on fixed Gauss-Legendre panels; the rule and its
/// half-width refinement must agree or the evaluation is rejected.
fn arm_log_likelihood(f: &[f64], clicks: &[u32], n_s: f64) -> Result<f64> {
    debug_assert_eq!(f.len(), clicks.len());
    if n_s == 0.0 {
        return Ok(if clicks.iter().all(|&c| c == 0) {
            0.0
        } else {
            f64::NEG_INFINITY
        });
    }
    let mut f_dark = 0.0;
    let mut clicked = Vec::new();
    for (&fp, &k) in f.iter().zip(clicks) {
        if k > 0 {
            clicked.push(fp);
        } else {
            f_dark += fp;
        }
    }
    let (coarse, refined) = quad_rules();
    let eval = |rule: &QuadRule| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.base_weights)
            .map(|(&t, &bw)| {
                let mut g = (-0.5 * n_s * t * f_dark).exp();
                for &fc in &clicked {
                    g *= -(-0.5 * n_s * t * fc).exp_m1();
                }
                bw * g
            })
            .sum()
    };
    let l1 = eval(coarse);
    let l2 = eval(refined);
    if (l1 - l2).abs() > QUAD_CHECK_ABS.max(QUAD_CHECK_REL * l2.abs()) {
        return Err(Error::QuadratureNonConvergence(format!(
            "arm likelihood rule disagreement {:e} vs {:e}",
            l1, l2
        )));
    }
    Ok(l2.ln())
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n-1}(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::DetectorGeometry;
    use crate::montecarlo::simulate_batch;
    use approx::assert_relative_eq;

    fn scene(n_s: f64, d: f64) -> Scene {
        Scene::new(n_s, d, PsfModel::gaussian(1.0).unwrap()).unwrap()
    }

    fn psf() -> PsfModel {
        PsfModel::gaussian(1.0).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(GL_POINTS);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert_relative_eq!(m2, 2.0 / 3.0, max_relative = 1e-13);
        let quartic: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(4)).sum();
        assert_relative_eq!(quartic, 2.0 / 5.0, max_relative = 1e-13);
    }

    #[test]
    fn quadrature_tail_is_negligible() {
        assert!((-QUAD_T_MAX).exp() < 1e-12);
        // the exponential density integrates to ~1 over the panels
        let (coarse, _) = quad_rules();
        let total: f64 = coarse.base_weights.iter().sum();
        assert_relative_eq!(total, 1.0 - (-QUAD_T_MAX).exp(), max_relative = 1e-13);
    }

    #[test]
    fn spade_zero_count_likelihood_is_closed_form() {
        let setup = MeasurementSetup::FinSpade { q_max: 5 };
        let outcome = vec![0u32; 6];
        for d in [0.0, 2.0] {
            let w = weights_spade(&scene(1.5, d), 5).unwrap();
            let f_even: f64 = w.f.iter().step_by(2).sum();
            let f_odd: f64 = w.f.iter().skip(1).step_by(2).sum();
            let expect = 1.0 / ((1.0 + 3.0 * f_even) * (1.0 + 3.0 * f_odd));
            let ll = log_likelihood(&setup, &outcome, d, 1.5, &psf()).unwrap();
            assert_relative_eq!(ll.exp(), expect, max_relative = 1e-12);
        }
        // likelihood ratio between candidates is finite
        let l0 = log_likelihood(&setup, &outcome, 0.0, 1.5, &psf()).unwrap();
        let l2 = log_likelihood(&setup, &outcome, 2.0, 1.5, &psf()).unwrap();
        assert!((l0 - l2).is_finite());
    }

    /// Brute-force oracle: Simpson quadrature of the Poisson-exponential
    /// mixture for each outcome of a tiny instance, plus the geometric
    /// closed form of the block totals.
    #[test]
    fn spade_likelihood_normalizes_on_tiny_instance() {
        let n_s = 1.5;
        let d = 2.0;
        let setup = MeasurementSetup::FinSpade { q_max: 1 };
        let w = weights_spade(&scene(n_s, d), 1).unwrap();

        let mixture = |count: u32, fq: f64| -> f64 {
            // ∫ Pois(count; fq x) Exp(x; 2N) dx by Simpson on [0, 80N]
            let n = 160_001;
            let h = 80.0 * n_s / (n - 1) as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let x = i as f64 * h;
                let lam = fq * x;
                let pois = if lam == 0.0 {
                    f64::from(count == 0)
                } else {
                    (count as f64 * lam.ln() - lam - ln_gamma(count as f64 + 1.0)).exp()
                };
                let dens = (-x / (2.0 * n_s)).exp() / (2.0 * n_s);
                let sw = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += sw * pois * dens;
            }
            acc * h / 3.0
        };

        let mut total = 0.0;
        for n0 in 0..=5u32 {
            for n1 in 0..=5u32 {
                let ll = log_likelihood(&setup, &[n0, n1], d, n_s, &psf()).unwrap();
                let brute = mixture(n0, w.f[0]) * mixture(n1, w.f[1]);
                assert!(
                    (ll.exp() - brute).abs() < 1e-6,
                    "outcome ({n0},{n1}): {} vs {}",
                    ll.exp(),
                    brute
                );
                total += ll.exp();
            }
        }
        // block totals are geometric; the truncated mass is the product of
        // the two truncated geometric sums
        let trunc = |fq: f64| -> f64 {
            let r = 2.0 * n_s * fq / (1.0 + 2.0 * n_s * fq);
            1.0 - r.powi(6)
        };
        assert_relative_eq!(total, trunc(w.f[0]) * trunc(w.f[1]), max_relative = 1e-9);
        assert!(total <= 1.0 + 1e-12);
    }

    /// Inclusion-exclusion closed form of the arm integral as an oracle:
    /// L = Σ_{s ⊆ clicked} (−1)^{|s|} / (1 + N (F_dark + F_s)/2).
    #[test]
    fn sliver_arm_quadrature_matches_inclusion_exclusion() {
        let n_s = 1.5;
        let geometry = DetectorGeometry::new(17.0, 6).unwrap();
        let c = crate::measurement::coefficients_sliver(&scene(n_s, 0.7), &geometry).unwrap();
        for (f, clicks) in [
            (&c.f_sym, vec![0u32, 1, 0, 0, 1, 0]),
            (&c.f_sym, vec![1, 1, 1, 0, 0, 0]),
            (&c.f_asym, vec![0, 0, 1, 1, 0, 0]),
            (&c.f_asym, vec![0, 0, 0, 0, 0, 0]),
        ] {
            let clicked: Vec<f64> = f
                .iter()
                .zip(&clicks)
                .filter(|(_, &k)| k > 0)
                .map(|(&fp, _)| fp)
                .collect();
            let f_dark: f64 = f
                .iter()
                .zip(&clicks)
                .filter(|(_, &k)| k == 0)
                .map(|(&fp, _)| fp)
                .sum();
            let mut oracle = 0.0;
            for mask in 0..(1usize << clicked.len()) {
                let f_s: f64 = clicked
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &fp)| fp)
                    .sum();
                let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                oracle += sign / (1.0 + n_s * (f_dark + f_s) / 2.0);
            }
            let ll = arm_log_likelihood(f, &clicks, n_s).unwrap();
            assert_relative_eq!(ll.exp(), oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn direct_imaging_likelihood_is_refused() {
        let setup = MeasurementSetup::DirectImaging {
            geometry: DetectorGeometry::new(17.0, 4).unwrap(),
        };
        assert!(matches!(
            log_likelihood(&setup, &[0, 0, 0, 0], 1.0, 1.5, &psf()),
            Err(Error::UnsupportedModel { .. })
        ));
    }

    #[test]
    fn candidate_domain_is_validated() {
        let setup = MeasurementSetup::FinSpade { q_max: 2 };
        assert!(log_likelihood(&setup, &[0, 0, 0], -0.5, 1.5, &psf()).is_err());
        assert!(log_likelihood(&setup, &[0, 0], 1.0, 1.5, &psf()).is_err());
    }

    #[test]
    fn aggregate_objective_equals_summed_single_record_likelihoods() {
        let sc = scene(1.5, 2.0);
        let setup = MeasurementSetup::FinSpade { q_max: 5 };
        let records = simulate_batch(&sc, &setup, 21, 200).unwrap();
        let agg = SpadeAggregate::from_records(&records, 5);
        for d in [0.5, 2.0, 3.7] {
            let w = weights_spade(&scene(1.5, d), 5).unwrap();
            let from_agg = agg.log_likelihood(&w, 1.5);
            let direct: f64 = records
                .iter()
                .map(|r| log_likelihood(&setup, &r.outcome, d, 1.5, &psf()).unwrap())
                .sum();
            assert_relative_eq!(from_agg, direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn flat_likelihood_is_flagged_as_boundary() {
        let sc = scene(0.0, 1.0);
        let setup = MeasurementSetup::FinSpade { q_max: 2 };
        let records = simulate_batch(&sc, &setup, 4, 1).unwrap();
        let est = ml_estimate(&setup, &records, (0.0, 8.0)).unwrap();
        assert!(est.boundary);
    }

    #[test]
    fn spade_ml_centers_on_true_separation() {
        let sc = scene(1.5, 2.0);
        let setup = MeasurementSetup::FinSpade { q_max: 5 };
        let records = simulate_batch(&sc, &setup, 2024, 10_000).unwrap();
        let est = ml_estimate(&setup, &records, (0.0, 8.0)).unwrap();
        // information ~ 0.56 per record: 4 sigma is about 0.054
        assert!(
            (est.d_hat - 2.0).abs() < 0.06,
            "ML estimate {} too far from 2",
            est.d_hat
        );
        assert!(!est.boundary);
        assert!(est.log_likelihood.is_finite());
    }

    #[test]
    fn sliver_all_dark_asym_arm_pulls_estimate_to_zero() {
        let sc = scene(1.5, 0.0);
        let setup = MeasurementSetup::PixSliver {
            geometry: DetectorGeometry::new(17.0, 4).unwrap(),
        };
        let records = simulate_batch(&sc, &setup, 31, 400).unwrap();
        assert!(records.iter().all(|r| r.outcome[4..].iter().all(|&k| k == 0)));
        let est = ml_estimate(&setup, &records, (0.0, 8.0)).unwrap();
        assert!(est.d_hat < 0.2, "estimate {} should sit near 0", est.d_hat);
        assert!(est.boundary);
    }

    #[test]
    fn ml_validates_inputs() {
        let sc = scene(1.5, 2.0);
        let setup = MeasurementSetup::FinSpade { q_max: 2 };
        let records = simulate_batch(&sc, &setup, 1, 4).unwrap();
        assert!(ml_estimate(&setup, &[], (0.0, 8.0)).is_err());
        assert!(ml_estimate(&setup, &records, (3.0, 1.0)).is_err());
        let other = MeasurementSetup::FinSpade { q_max: 3 };
        assert!(ml_estimate(&other, &records, (0.0, 8.0)).is_err());
    }
}
