//! Statistical validation of the simulator against the analytic moments and
//! of the maximum-likelihood estimator against the error bound, at a scale
//! that keeps the suite quick. Fixed seeds make the checks deterministic.

use qlimit_core::fisher::fi_lower_bound;
use qlimit_core::measurement::DetectorGeometry;
use qlimit_core::montecarlo::{
    compare_moments, empirical_moments, ml_estimate, simulate_batch, MeasurementSetup,
};
use qlimit_core::psf::PsfModel;
use qlimit_core::quantum::{qcrb, Scene};

fn scene(n_s: f64, d: f64) -> Scene {
    Scene::new(n_s, d, PsfModel::gaussian(1.0).unwrap()).unwrap()
}

fn check_moments(setup: &MeasurementSetup, sc: &Scene, trials: u64, seed: u64) {
    let records = simulate_batch(sc, setup, seed, trials).unwrap();
    let em = empirical_moments(&records).unwrap();
    let analytic = setup.moments(sc).unwrap();
    let cmp = compare_moments(&em, &analytic).unwrap();
    assert!(
        cmp.max_mean_z <= 4.0,
        "worst mean deviation {} standard errors",
        cmp.max_mean_z
    );
    assert!(
        cmp.max_cov_z <= 5.0,
        "worst covariance deviation {} standard errors",
        cmp.max_cov_z
    );
}

#[test]
fn direct_imaging_moments_are_reproduced() {
    let setup = MeasurementSetup::DirectImaging {
        geometry: DetectorGeometry::new(17.0, 50).unwrap(),
    };
    check_moments(&setup, &scene(1.5, 2.0), 20_000, 1001);
}

#[test]
fn spade_moments_are_reproduced() {
    let setup = MeasurementSetup::FinSpade { q_max: 5 };
    check_moments(&setup, &scene(1.5, 2.0), 20_000, 1002);
}

#[test]
fn sliver_moments_are_reproduced() {
    let setup = MeasurementSetup::PixSliver {
        geometry: DetectorGeometry::new(17.0, 16).unwrap(),
    };
    check_moments(&setup, &scene(1.5, 2.0), 20_000, 1003);
}

#[test]
fn sliver_cross_arm_sample_covariance_is_consistent_with_zero() {
    let setup = MeasurementSetup::PixSliver {
        geometry: DetectorGeometry::new(17.0, 16).unwrap(),
    };
    let sc = scene(1.5, 2.0);
    let records = simulate_batch(&sc, &setup, 1004, 20_000).unwrap();
    let em = empirical_moments(&records).unwrap();
    let analytic = setup.moments(&sc).unwrap();
    let cmp = compare_moments(&em, &analytic).unwrap();
    assert!(
        cmp.max_cross_block_cov_z <= 5.0,
        "cross-arm covariance {} standard errors from zero",
        cmp.max_cross_block_cov_z
    );
}

#[test]
fn ml_mse_respects_the_error_bound() {
    // modest batch: the sampled MSE must not undercut the bound by more than
    // its own Monte Carlo slack
    let sc = scene(1.5, 2.0);
    let setup = MeasurementSetup::FinSpade { q_max: 1 };
    let records_per = 300u64;
    let estimates = 100u64;
    let mut sq = 0.0;
    for e in 0..estimates {
        let records = simulate_batch(&sc, &setup, 77_000 + e, records_per).unwrap();
        let est = ml_estimate(&setup, &records, (0.0, 8.0)).unwrap();
        sq += (est.d_hat - 2.0) * (est.d_hat - 2.0);
    }
    let mse = sq / estimates as f64;
    let bound = qcrb(&sc, records_per).unwrap();
    assert!(mse >= 0.95 * bound, "MSE {mse} undercuts the bound {bound}");
    // sandwich from above: the scheme's own information J >= moment bound,
    // so the asymptotic MSE cannot exceed 1/(records * moment bound) by much
    let j_bound = fi_lower_bound(&setup.moments(&sc).unwrap()).unwrap().value;
    let ceiling = 1.15 / (records_per as f64 * j_bound);
    assert!(mse <= ceiling, "MSE {mse} vs ceiling {ceiling}");
}
