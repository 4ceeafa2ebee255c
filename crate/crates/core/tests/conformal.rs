//! Finite-sample coverage of the conformal sets by simulation.

use churnpool::conformal::{
    calibrate_pooled, calibrate_split, conservative_adjust, coverage_audit, nonconformity, predict_set, PredictionSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of trials in which a fresh exchangeable score falls at or
/// below the calibrated threshold.
fn simulate_coverage(n_cal: usize, alpha: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..trials {
        let scores: Vec<f64> = (0..n_cal).map(|_| rng.random::<f64>()).collect();
        let cal = calibrate_split(&scores, alpha).unwrap();
        hits += usize::from(rng.random::<f64>() <= cal.q_hat);
    }
    hits as f64 / trials as f64
}

#[test]
fn uniform_scores_meet_the_finite_sample_bound() {
    let trials = 10_000;
    let cov = simulate_coverage(100, 0.10, trials, 2024);
    let bound = 91.0 / 101.0;
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    assert!(cov >= bound - 3.0 * se, "coverage {cov}");
    // Exchangeability also caps coverage at (k + 1) / (n + 1).
    assert!(cov <= 92.0 / 101.0 + 3.0 * se, "coverage {cov}");
}

#[test]
fn coverage_holds_for_several_sizes_and_levels() {
    for (n, alpha) in [(19, 0.1), (50, 0.2), (200, 0.05)] {
        let cov = simulate_coverage(n, alpha, 4000, n as u64);
        let se = ((1.0 - alpha) * alpha / 4000.0f64).sqrt();
        assert!(cov >= 1.0 - alpha - 3.0 * se, "n {n} alpha {alpha}: {cov}");
    }
}

#[test]
fn sets_cover_labels_from_a_calibrated_model() {
    // Labels drawn from the predicted probabilities themselves.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut draw = |n: usize| -> (Vec<f64>, Vec<u8>) {
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y = p.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
        (p, y)
    };
    let (p_cal, y_cal) = draw(2000);
    let scores: Vec<f64> = p_cal.iter().zip(&y_cal).map(|(&p, &y)| nonconformity(y, p)).collect();
    let cal = calibrate_pooled(&[scores], 0.10).unwrap();
    let (p_test, y_test) = draw(5000);
    let sets: Vec<PredictionSet> = p_test.iter().map(|&p| predict_set(p, cal.q_hat)).collect();
    let report = coverage_audit(&sets, &y_test).unwrap();
    assert!((report.coverage - 0.90).abs() < 0.02, "{report:?}");
    assert!(report.empty_rate < 0.01);
}

#[test]
fn inflation_never_lowers_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
    let base = calibrate_split(&scores, 0.1).unwrap();
    let wide = conservative_adjust(&base, 0.2).unwrap();
    assert!(wide.q_hat >= base.q_hat && wide.q_hat <= 1.0);
    assert!(wide.conservative);
}

proptest! {
    #[test]
    fn set_membership_follows_threshold(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let s = predict_set(p, q);
        prop_assert_eq!(s.contains(0), nonconformity(0, p) <= q);
        prop_assert_eq!(s.contains(1), nonconformity(1, p) <= q);
    }

    #[test]
    fn larger_threshold_gives_superset(p in 0.0f64..=1.0, q in 0.0f64..=1.0, extra in 0.0f64..=1.0) {
        let small = predict_set(p, q);
        let big = predict_set(p, (q + extra).min(1.0));
        for y in [0u8, 1] {
            prop_assert!(!small.contains(y) || big.contains(y));
        }
    }

    #[test]
    fn threshold_is_a_calibration_score(scores in prop::collection::vec(0.0f64..=1.0, 10..200), alpha in 0.05f64..0.3) {
        let cal = calibrate_split(&scores, alpha).unwrap();
        prop_assert!(cal.q_hat == 1.0 || scores.contains(&cal.q_hat));
        let covered = scores.iter().filter(|&&s| s <= cal.q_hat).count() as f64 / scores.len() as f64;
        prop_assert!(covered >= 1.0 - alpha - 1e-12);
    }
}
