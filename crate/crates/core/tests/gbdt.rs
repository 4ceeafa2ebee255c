//! Boosting contract: monotone training loss, early stopping, importance.

use churnpool::data::Dataset;
use churnpool::gbdt::{fit_gbdt, fit_gbdt_with_history, GbdtConfig, TreeEnsemble};
use churnpool::math::log_loss;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|k| format!("f{k}")).collect()
}

/// Labels from a noisy linear score on uniform features.
fn corpus(n: usize, p: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = 2.0 * x[0] - x[1 % p] + noise * rng.random_range(-1.0..1.0);
        labels.push(u8::from(z > 0.0));
        rows.push(x);
    }
    Dataset::from_rows(&rows, labels, names(p)).unwrap()
}

fn no_subsampling() -> GbdtConfig {
    GbdtConfig {
        iterations: 200,
        row_subsample: 1.0,
        feature_subsample: 1.0,
        early_stopping_rounds: 1000,
        ..GbdtConfig::default()
    }
}

fn truncated_loss(model: &TreeEnsemble, m: usize, data: &Dataset) -> f64 {
    let head = TreeEnsemble {
        trees: model.trees[..m].to_vec(),
        ..model.clone()
    };
    log_loss(&head.predict_proba_all(data).unwrap(), data.labels())
}

#[test]
fn training_loss_never_increases_without_subsampling() {
    for seed in 0..4 {
        let train = corpus(500, 4, 1.0, seed);
        let (_, hist) = fit_gbdt_with_history(&train, &train, &no_subsampling()).unwrap();
        for w in hist.train_loss.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn separable_data_loss_strictly_decreases_early() {
    let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
    let labels = (0..200).map(|i| u8::from(i >= 100)).collect();
    let data = Dataset::from_rows(&rows, labels, names(1)).unwrap();
    let (_, hist) = fit_gbdt_with_history(&data, &data, &no_subsampling()).unwrap();
    for w in hist.train_loss[..11].windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn early_stopping_returns_best_validation_length() {
    // Pure-noise training labels overfit quickly; validation follows the
    // true signal.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut train = corpus(600, 3, 1.0, 1);
    let flipped: Vec<u8> = train
        .labels()
        .iter()
        .map(|&y| if rng.random::<f64>() < 0.4 { 1 - y } else { y })
        .collect();
    let rows: Vec<Vec<f64>> = train.rows().map(<[f64]>::to_vec).collect();
    train = Dataset::from_rows(&rows, flipped, names(3)).unwrap();
    let val = corpus(400, 3, 0.0, 2);

    let base = GbdtConfig {
        iterations: 600,
        learning_rate: 0.3,
        min_samples_leaf: 1,
        max_depth: 6,
        l2_leaf: 0.0,
        row_subsample: 1.0,
        feature_subsample: 1.0,
        ..GbdtConfig::default()
    };
    // Trees never depend on the validation rows, so monitoring the
    // (monotone) training loss instead yields the untruncated ensemble.
    let full = fit_gbdt(&train, &train, &GbdtConfig { early_stopping_rounds: 10_000, ..base.clone() }).unwrap();
    assert_eq!(full.trees.len(), base.iterations);

    // Replay the stopping rule on the untruncated curve.
    let rounds = 50;
    let mut best = (f64::INFINITY, 0);
    for m in 0..=base.iterations {
        let loss = truncated_loss(&full, m, &val);
        if loss < best.0 {
            best = (loss, m);
        }
        if m - best.1 >= rounds {
            break;
        }
    }
    assert!(best.1 > 0 && best.1 < base.iterations - rounds, "curve not U-shaped: best {}", best.1);

    let (stopped, hist) = fit_gbdt_with_history(&train, &val, &GbdtConfig { early_stopping_rounds: rounds, ..base }).unwrap();
    assert!(hist.stopped_early);
    assert_eq!(stopped.trees.len(), best.1);
    assert_eq!(hist.best_iteration, best.1);
    assert_eq!(stopped.trees[..], full.trees[..best.1]);
}

#[test]
fn importance_sums_to_one_and_ranks_signal() {
    let data = corpus(800, 5, 0.3, 4);
    let model = fit_gbdt(&data, &data, &GbdtConfig { iterations: 100, ..GbdtConfig::default() }).unwrap();
    let imp = model.feature_importance();
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(imp.iter().all(|v| *v >= 0.0));
    let top = (0..5).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
    assert_eq!(top, 0);
}

#[test]
fn defaults_respect_depth_and_leaf_size() {
    let data = corpus(1000, 4, 0.5, 5);
    let model = fit_gbdt(&data, &data, &GbdtConfig { iterations: 30, ..GbdtConfig::default() }).unwrap();
    for tree in &model.trees {
        assert!(tree.depth() <= 6);
        tree.visit_leaves(&mut |_, cover| assert!(cover >= 20.0));
    }
}

#[test]
fn fitting_is_deterministic() {
    let data = corpus(300, 4, 0.5, 6);
    let cfg = GbdtConfig { iterations: 40, ..GbdtConfig::default() };
    assert_eq!(fit_gbdt(&data, &data, &cfg).unwrap(), fit_gbdt(&data, &data, &cfg).unwrap());
}

#[test]
fn json_round_trip_is_bit_exact() {
    let data = corpus(300, 3, 0.5, 7);
    let model = fit_gbdt(&data, &data, &GbdtConfig { iterations: 25, ..GbdtConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = TreeEnsemble::load(&path).unwrap();
    assert_eq!(back, model);
    for x in data.rows() {
        assert_eq!(back.predict_margin(x).unwrap().to_bits(), model.predict_margin(x).unwrap().to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probabilities_stay_inside_clip_bounds(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let data = corpus(120, 2, 0.5, seed);
        let mut model = fit_gbdt(&data, &data, &GbdtConfig { iterations: 10, min_samples_leaf: 5, ..GbdtConfig::default() }).unwrap();
        model.init_logodds += shift;
        for x in data.rows() {
            let p = model.predict_proba(x).unwrap();
            prop_assert!((1e-12..=1.0 - 1e-12).contains(&p));
        }
    }
}
