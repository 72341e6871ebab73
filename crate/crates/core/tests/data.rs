mod common;

use std::collections::BTreeSet;

use common::{rng, three_blobs};
use hirf::data::{self, ArrivalSchedule, Dataset, Label, LabeledSample};
use proptest::prelude::*;

#[test]
fn bootstrap_distinct_fraction_matches_expectation() {
    let n = 1000;
    let samples = (0..n)
        .map(|i| LabeledSample::new(i as u64, vec![i as f64], Label(1 + (i % 2) as u32)))
        .collect();
    let d = Dataset::new(samples).unwrap();
    let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    let mut r = rng(11);
    let reps = 50;
    let mean: f64 = (0..reps)
        .map(|t| {
            let b = data::bootstrap(&d, t, &mut r).unwrap();
            assert_eq!(b.len(), n);
            b.distinct().len() as f64 / n as f64
        })
        .sum::<f64>()
        / reps as f64;
    assert!(
        (mean - expected).abs() <= 0.02,
        "mean {mean}, expected {expected}"
    );
}

#[test]
fn left_out_is_complement_of_bootstrap() {
    let d = three_blobs(20, 1);
    let b = data::bootstrap(&d, 0, &mut rng(2)).unwrap();
    let out = data::left_out(&d, &b);
    let drawn = b.distinct();
    assert_eq!(out.len() + drawn.len(), d.len());
    assert!(out.iter().all(|s| !drawn.contains(&s.id)));
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let d = three_blobs(5, 3);
    data::write_csv(&d, &path).unwrap();
    let back = data::read_csv(&path).unwrap();
    assert_eq!(back.len(), d.len());
    for (a, b) in d.iter().zip(back.iter()) {
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }
}

#[test]
fn stratified_split_keeps_every_class_on_both_sides() {
    let d = three_blobs(30, 4);
    let (train, test) = data::stratified_split(&d, 0.2, &mut rng(5)).unwrap();
    assert_eq!(train.len() + test.len(), d.len());
    assert_eq!(train.classes(), d.classes());
    assert_eq!(test.classes(), d.classes());
    for (_, c) in test.class_counts() {
        assert_eq!(c, 6);
    }
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5)
        .prop_flat_map(|dim| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim), 2..40))
}

proptest! {
    #[test]
    fn normalize_then_denormalize_is_identity(rows in rows_strategy()) {
        let labels = vec![Label(1); rows.len()];
        let d = Dataset::from_rows(rows.clone(), &labels).unwrap();
        let stats = data::fit_normalizer(&d).unwrap();
        for x in &rows {
            let z = data::normalize(x, &stats).unwrap();
            let back = stats.denormalize(&z);
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn normalized_features_have_zero_mean_unit_variance(rows in rows_strategy()) {
        let labels = vec![Label(1); rows.len()];
        let d = Dataset::from_rows(rows, &labels).unwrap();
        let stats = data::fit_normalizer(&d).unwrap();
        let z = d.normalized(&stats).unwrap();
        let n = z.len() as f64;
        for j in 0..z.dim() {
            let mean = z.iter().map(|s| s.x[j]).sum::<f64>() / n;
            let var = z.iter().map(|s| (s.x[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            if stats.is_constant(j) {
                prop_assert!(z.iter().all(|s| s.x[j] == 0.0));
            } else {
                prop_assert!((var - 1.0).abs() < 1e-6, "variance {var}");
            }
        }
    }

    #[test]
    fn stepped_schedule_partitions_classes(c in 2u32..15, initial in 1usize..15, step in 1usize..6) {
        prop_assume!(initial <= c as usize);
        let classes: BTreeSet<Label> = (1..=c).map(Label).collect();
        let s = ArrivalSchedule::stepped(&classes, initial, step).unwrap();
        s.validate(&classes).unwrap();
        let mut seen = s.initial.clone();
        for b in &s.batches {
            prop_assert!(!b.is_empty() && b.len() <= step);
            prop_assert!(seen.is_disjoint(b));
            seen.extend(b.iter().copied());
        }
        prop_assert_eq!(seen, classes);
    }

    #[test]
    fn bootstrap_draws_only_known_ids(n in 1usize..60, seed in any::<u64>()) {
        let samples = (0..n)
            .map(|i| LabeledSample::new(i as u64 * 7, vec![0.0], Label(1)))
            .collect();
        let d = Dataset::new(samples).unwrap();
        let b = data::bootstrap(&d, 3, &mut rng(seed)).unwrap();
        prop_assert_eq!(b.len(), n);
        prop_assert_eq!(b.tree_index, 3);
        prop_assert!(b.sample_ids.iter().all(|id| d.contains_id(*id)));
    }
}
