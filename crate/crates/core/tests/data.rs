//! Loading, standardization, splitting and simulation of SME datasets.

use std::collections::HashSet;

use churnpool::data::{
    complement, generate_hierarchical_population, load_csv, make_synthetic_smes, sample_public_corpus, standardize,
    stratified_kfold_indices, stratified_split_indices, write_csv, CsvOptions, Dataset,
};
use proptest::prelude::*;

fn labelled(n: usize, positives: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
    let labels = (0..n).map(|i| u8::from(i < positives)).collect();
    Dataset::from_rows(&rows, labels, vec!["a".into(), "b".into()]).unwrap()
}

#[test]
fn csv_round_trip_keeps_every_bit() {
    let dir = tempfile::tempdir().unwrap();
    let public = sample_public_corpus(&[0.4, -1.1, 0.05], 0.3, 3, 50, 3).unwrap();
    let path = dir.path().join("public.csv");
    write_csv(&public, &path, "target", "source").unwrap();
    let back = load_csv(&path, &CsvOptions::default()).unwrap();
    assert_eq!(back, public);
}

#[test]
fn missing_tag_column_gives_untagged_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, "x,target\n1,0\n2,1\n3,0\n").unwrap();
    let d = load_csv(&path, &CsvOptions::default()).unwrap();
    assert!(d.source_tags().is_none());
    assert_eq!((d.n_rows(), d.n_features()), (3, 1));
}

#[test]
fn sparse_column_gets_indicator_and_median() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let mut text = String::from("x,target\n");
    for v in ["", "4", "1", "9", "3", "7", "2", "8", "5", "6"] {
        text.push_str(&format!("{v},0\n"));
    }
    std::fs::write(&path, text).unwrap();
    let d = load_csv(&path, &CsvOptions::default()).unwrap();
    assert_eq!(d.n_features(), 2);
    assert_eq!(d.value(0, 0), 5.0);
    assert_eq!(d.column(1)[..2], [1.0, 0.0]);
}

#[test]
fn leave_one_out_folds_are_singletons() {
    let d = labelled(10, 5);
    let folds = stratified_kfold_indices(&d, 10, 1).unwrap();
    assert_eq!(folds.len(), 10);
    assert!(folds.iter().all(|f| f.len() == 1));
}

#[test]
fn simulator_is_deterministic_and_shaped() {
    let (a, ta) = generate_hierarchical_population(4, 6, 50, 0.5, 0.5, 9).unwrap();
    let (b, tb) = generate_hierarchical_population(4, 6, 50, 0.5, 0.5, 9).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.smes(), b.smes());
    assert_eq!(a.len(), 6);
    assert_eq!(ta.betas_true.len(), 6);
    assert!(a.smes().iter().all(|d| d.n_rows() == 50 && d.n_features() == 4));
}

#[test]
fn homogeneous_population_shares_coefficients() {
    let (_, truth) = generate_hierarchical_population(3, 5, 20, 1.0, 0.0, 4).unwrap();
    assert!(truth.betas_true.iter().all(|b| b == &truth.mu_true));
}

#[test]
fn resampled_smes_come_from_the_source() {
    let src = labelled(40, 10);
    let coll = make_synthetic_smes(&src, 4, 25, 2).unwrap();
    let rows: HashSet<Vec<u64>> = src.rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    for sme in coll.smes() {
        assert_eq!(sme.n_rows(), 25);
        assert!(sme.rows().all(|r| rows.contains(&r.iter().map(|v| v.to_bits()).collect::<Vec<_>>())));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_columns_have_zero_mean_unit_std(
        cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2..40), 1..4),
    ) {
        let n = cols.iter().map(Vec::len).min().unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let names = (0..cols.len()).map(|k| format!("c{k}")).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let d = Dataset::from_rows(&rows, labels, names).unwrap();
        let (s, stats) = standardize(&d).unwrap();
        for k in 0..d.n_features() {
            let col = s.column(k);
            let m = col.iter().sum::<f64>() / n as f64;
            prop_assert!(m.abs() < 1e-10);
            let raw_std = stats.stds[k];
            prop_assert!(raw_std > 0.0);
            let var = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
            prop_assert!(var < 1e-20 || (var - 1.0).abs() < 1e-9);
        }
        // Applying saved stats reproduces the transform.
        let again = stats.apply(&d).unwrap();
        prop_assert_eq!(again.features(), s.features());
    }

    #[test]
    fn kfold_partitions_with_balanced_classes(n in 20usize..200, pos_frac in 0.1f64..0.9, k in 2usize..8, seed in 0u64..1000) {
        let positives = ((n as f64 * pos_frac) as usize).clamp(k, n - k);
        let d = labelled(n, positives);
        let folds = stratified_kfold_indices(&d, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let expected = positives as f64 / k as f64;
        for f in &folds {
            let p = f.iter().filter(|&&i| d.label(i) == 1).count() as f64;
            prop_assert!((p - expected).abs() <= 1.0);
        }
        prop_assert_eq!(stratified_kfold_indices(&d, k, seed).unwrap(), folds);
    }

    #[test]
    fn split_counts_follow_rounding(n in 10usize..300, pos_frac in 0.1f64..0.9, frac in 0.1f64..0.5, seed in 0u64..1000) {
        let positives = ((n as f64 * pos_frac) as usize).clamp(2, n - 2);
        let d = labelled(n, positives);
        let (train, test) = stratified_split_indices(&d, frac, seed).unwrap();
        let test_pos = test.iter().filter(|&&i| d.label(i) == 1).count() as f64;
        prop_assert!((test_pos - (positives as f64 * frac).round()).abs() <= 1.0);
        prop_assert_eq!(&complement(n, &test), &train);
        prop_assert!(train.iter().any(|&i| d.label(i) == 1) && test.iter().any(|&i| d.label(i) == 1));
    }
}
