//! Moment-based lower bound on the classical Fisher information.
//!
//! For any vector observation with mean `μ(d)` and covariance `C(d)`, the
//! Fisher information about `d` obeys `J ≥ μ̇ᵀ C⁻¹ μ̇`. Only the first two
//! moments enter, which makes the bound computable for measurements whose
//! full joint distribution is intractable. Near zero separation several
//! observation components have both vanishing variance and vanishing
//! derivative, so `C` must be treated as a pseudo-inverse on its numerically
//! resolved support rather than inverted.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendirections below this fraction of the largest block eigenvalue are
/// treated as numerically zero variance (f64 eigensolves cannot resolve
/// relative scales much past 1e-12).
const SUPPORT_THRESHOLD_REL: f64 = 1e-12;
/// Absolute floor for the support threshold.
const SUPPORT_THRESHOLD_FLOOR: f64 = 1e-300;
/// A derivative vector with more than this fraction of its norm on discarded
/// directions means the bound diverges and is surfaced as an error. Benign
/// 0/0 directions at small separation stay orders of magnitude below it.
const DEGENERATE_FRACTION: f64 = 1e-6;
/// PSD tolerance: minimum eigenvalue must not fall below −1e-10 × trace.
const PSD_TOL_REL: f64 = 1e-10;
/// Symmetry tolerance for covariance validation.
const SYMMETRY_TOL: f64 = 1e-12;

/// Identifies one component of an observation vector.
///
/// `block` names an exactly decoupled group of components (detector arm,
/// mode parity); cross-block covariance entries are exactly zero by
/// construction, never by numerical thresholding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComponentLabel {
    pub scheme: String,
    pub block: String,
    pub index: u32,
}

impl ComponentLabel {
    pub fn new(scheme: &str, block: &str, index: u32) -> Self {
        ComponentLabel {
            scheme: scheme.to_owned(),
            block: block.to_owned(),
            index,
        }
    }
}

/// First two moments of an observation vector as functions of the separation:
/// mean `μ`, derivative `μ̇ = ∂μ/∂d`, covariance `C`, and per-component labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    mean: DVector<f64>,
    mean_dot: DVector<f64>,
    cov: DMatrix<f64>,
    labels: Vec<ComponentLabel>,
}

impl MomentSet {
    pub fn new(
        mean: DVector<f64>,
        mean_dot: DVector<f64>,
        cov: DMatrix<f64>,
        labels: Vec<ComponentLabel>,
    ) -> Result<Self> {
        let n = mean.len();
        if mean_dot.len() != n || cov.nrows() != n || cov.ncols() != n || labels.len() != n {
            return Err(Error::InvalidArgument {
                what: "moment set",
                why: format!(
                    "dimension mismatch: mean {}, mean_dot {}, cov {}x{}, labels {}",
                    n,
                    mean_dot.len(),
                    cov.nrows(),
                    cov.ncols(),
                    labels.len()
                ),
            });
        }
        if mean.iter().any(|v| !v.is_finite())
            || mean_dot.iter().any(|v| !v.is_finite())
            || cov.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { what: "moment set" });
        }
        let scale = cov.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidArgument {
                        what: "covariance",
                        why: format!("not symmetric at ({i},{j})"),
                    });
                }
            }
        }
        Ok(MomentSet {
            mean,
            mean_dot,
            cov,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.len() == 0
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn mean_dot(&self) -> &DVector<f64> {
        &self.mean_dot
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn labels(&self) -> &[ComponentLabel] {
        &self.labels
    }
}

/// Contribution of one decoupled block to the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockContribution {
    pub block: String,
    pub value: f64,
}

/// Result of evaluating the moment bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// The lower bound `μ̇ᵀ C⁺ μ̇` on the Fisher information.
    pub value: f64,
    /// Number of eigendirections retained in the covariance support.
    pub support_size: usize,
    /// Additive per-block breakdown, present when the covariance is exactly
    /// block-diagonal over more than one label block.
    pub per_component: Option<Vec<BlockContribution>>,
}

/// Lower bound `μ̇ᵀ C⁺ μ̇` on the Fisher information of the observation.
///
/// The covariance is eigendecomposed and the quadratic form is evaluated on
/// the numerically nonzero support. When the labels split the covariance into
/// exactly decoupled blocks, each block is solved on its own; this keeps the
/// support threshold relative to the block's scale, which matters when one
/// block's variances are orders of magnitude below another's (the bound is
/// the same sum either way for block-diagonal `C`). A derivative component on
/// a discarded direction beyond [`DEGENERATE_FRACTION`] of `‖μ̇‖` raises
/// [`Error::DegenerateMoments`] instead of being averaged away.
pub fn fi_lower_bound(m: &MomentSet) -> Result<BoundResult> {
    let n = m.len();
    if n == 0 {
        return Err(Error::InvalidArgument {
            what: "moment set",
            why: "empty observation vector".into(),
        });
    }

    let blocks = label_blocks(m);
    let exact = blocks.len() > 1 && cross_block_entries_are_zero(m, &blocks);
    let groups: Vec<Vec<usize>> = if exact {
        blocks.iter().map(|(_, idx)| idx.clone()).collect()
    } else {
        vec![(0..n).collect()]
    };

    let trace = m.cov.trace();
    let mudot_norm = m.mean_dot.norm();
    let mut value = 0.0;
    let mut support_size = 0;
    let mut discarded_sq = 0.0;
    let mut contributions = Vec::with_capacity(groups.len());

    for idx in &groups {
        let cov_b = m.cov.select_rows(idx.iter()).select_columns(idx.iter());
        let mudot_b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| m.mean_dot[i]));
        let eig = SymmetricEigen::new(cov_b);
        let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
        let lambda_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l));
        if lambda_min < -PSD_TOL_REL * trace.max(0.0) {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: lambda_min,
                trace,
            });
        }
        let threshold = (SUPPORT_THRESHOLD_REL * lambda_max).max(SUPPORT_THRESHOLD_FLOOR);
        let proj = eig.eigenvectors.transpose() * &mudot_b;
        let mut block_value = 0.0;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda >= threshold {
                block_value += proj[k] * proj[k] / lambda;
                support_size += 1;
            } else {
                discarded_sq += proj[k] * proj[k];
            }
        }
        value += block_value;
        contributions.push(BlockContribution {
            block: m.labels[idx[0]].block.clone(),
            value: block_value,
        });
    }

    if mudot_norm > 0.0 && discarded_sq.sqrt() > DEGENERATE_FRACTION * mudot_norm {
        return Err(Error::DegenerateMoments {
            fraction: discarded_sq.sqrt() / mudot_norm,
        });
    }

    Ok(BoundResult {
        value,
        support_size,
        per_component: exact.then_some(contributions),
    })
}

/// True iff appending observations did not decrease the bound (up to 1e-10).
///
/// `small`'s labels must be a subset of `large`'s; anything else is a
/// [`Error::LabelMismatch`].
pub fn bound_monotonicity_check(small: &MomentSet, large: &MomentSet) -> Result<bool> {
    let large_labels: HashSet<&ComponentLabel> = large.labels.iter().collect();
    for l in &small.labels {
        if !large_labels.contains(l) {
            return Err(Error::LabelMismatch(format!(
                "component {:?} of the smaller set is absent from the larger one",
                l
            )));
        }
    }
    let b_small = fi_lower_bound(small)?;
    let b_large = fi_lower_bound(large)?;
    Ok(b_large.value >= b_small.value - 1e-10)
}

/// Index groups by block label, in order of first appearance.
fn label_blocks(m: &MomentSet) -> Vec<(String, Vec<usize>)> {
    let mut blocks: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in m.labels.iter().enumerate() {
        match blocks.iter_mut().find(|(b, _)| *b == l.block) {
            Some((_, idx)) => idx.push(i),
            None => blocks.push((l.block.clone(), vec![i])),
        }
    }
    blocks
}

/// Structural check: every entry between different blocks is exactly zero.
fn cross_block_entries_are_zero(m: &MomentSet, blocks: &[(String, Vec<usize>)]) -> bool {
    for (a, (_, idx_a)) in blocks.iter().enumerate() {
        for (_, idx_b) in blocks.iter().skip(a + 1) {
            for &i in idx_a {
                for &j in idx_b {
                    if m.cov[(i, j)] != 0.0 || m.cov[(j, i)] != 0.0 {
                        return false;
                    }
                }
            }
        }
    }
    true
}
