mod common;

use std::collections::BTreeSet;

use common::{brute_force_split, random_node, rng, three_blobs};
use hirf::data::{Dataset, Label, LabeledSample};
use hirf::tree::{
    self, choose_best_split_exhaustive, class_centroids, GainMode, NcmNode, SplitSearch, TreeConfig,
};
use proptest::prelude::*;

fn leaf_sums(node: &NcmNode, out: &mut Vec<f64>) {
    match node {
        NcmNode::Leaf { probs, .. } => out.push(probs.values().sum()),
        NcmNode::Internal { left, right, .. } => {
            leaf_sums(left, out);
            leaf_sums(right, out);
        }
    }
}

#[test]
fn exhaustive_split_matches_brute_force() {
    let mut r = rng(21);
    for _ in 0..60 {
        let d = random_node(&mut r, 4, 40);
        let cs = class_centroids(&d, d.classes()).unwrap();
        for mode in [GainMode::SizeWeighted, GainMode::Unweighted] {
            let got = choose_best_split_exhaustive(&d, &cs, mode).unwrap();
            let (assignment, gain) = brute_force_split(&d, &cs, mode);
            assert_eq!(got.gain, gain);
            assert_eq!(got.assignment, assignment);
        }
    }
}

#[test]
fn grown_tree_separates_blobs() {
    let d = three_blobs(40, 1);
    let t = tree::grow(&d, &TreeConfig::default(), &mut rng(2)).unwrap();
    let correct = d.iter().filter(|s| t.predict(&s.x).unwrap() == s.y).count();
    assert_eq!(correct, d.len());
    assert_eq!(t.known_classes, [Label(1), Label(2), Label(3)].into());
}

#[test]
fn growth_is_deterministic_per_seed() {
    let d = three_blobs(30, 3);
    let cfg = TreeConfig::default();
    let a = tree::grow(&d, &cfg, &mut rng(9)).unwrap();
    let b = tree::grow(&d, &cfg, &mut rng(9)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn refresh_extends_known_classes_and_keeps_shape() {
    let old = three_blobs(30, 4);
    let t = tree::grow(&old, &TreeConfig::default(), &mut rng(5)).unwrap();
    let extra = common::blobs(&[(4, vec![10.0, 10.0])], 30, 1.0, 6);
    let shifted: Vec<LabeledSample> = extra
        .iter()
        .map(|s| LabeledSample::new(s.id + 1000, s.x.clone(), s.y))
        .collect();
    let all = old.union(&Dataset::new(shifted).unwrap()).unwrap();
    let u = t.refresh_leaves(&all).unwrap();
    assert_eq!(u.structure_digest(), t.structure_digest());
    assert!(u.known_classes.contains(&Label(4)));
    assert_eq!(u.n_leaves(), t.n_leaves());
}

#[test]
fn exhaustive_tree_is_deterministic_without_rng_use() {
    let d = three_blobs(15, 7);
    let cfg = TreeConfig {
        search: SplitSearch::Exhaustive,
        ..TreeConfig::default()
    };
    let t = tree::grow(&d, &cfg, &mut rng(1)).unwrap();
    assert!(t.depth() >= 1);
}

fn labelled_points() -> impl Strategy<Value = Vec<(f64, f64, u32)>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 1u32..5), 2..60)
}

fn to_dataset(points: &[(f64, f64, u32)]) -> Dataset {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, (a, b, y))| LabeledSample::new(i as u64, vec![*a, *b], Label(*y)))
        .collect();
    Dataset::new(samples).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn depth_bound_and_leaf_normalization(
        points in labelled_points(),
        max_depth in 0usize..6,
        seed in any::<u64>(),
    ) {
        let d = to_dataset(&points);
        let cfg = TreeConfig { max_depth, ..TreeConfig::default() };
        let t = tree::grow(&d, &cfg, &mut rng(seed)).unwrap();
        prop_assert!(t.depth() <= max_depth);
        let mut sums = Vec::new();
        leaf_sums(&t.root, &mut sums);
        for s in sums {
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12, "leaf mass {s}");
        }
        let total: usize = t
            .leaves()
            .iter()
            .map(|l| match l { NcmNode::Leaf { support, .. } => *support, _ => 0 })
            .sum();
        prop_assert_eq!(total, d.len());
        for s in &d {
            let p = t.predict_proba(&s.x).unwrap();
            prop_assert!(p.keys().all(|l| d.classes().contains(l)));
        }
    }

    #[test]
    fn refresh_never_touches_structure(
        points in labelled_points(),
        fresh in labelled_points(),
        seed in any::<u64>(),
    ) {
        let d = to_dataset(&points);
        let t = tree::grow(&d, &TreeConfig::default(), &mut rng(seed)).unwrap();
        let u = t.refresh_leaves(&to_dataset(&fresh)).unwrap();
        prop_assert_eq!(u.structure_digest(), t.structure_digest());
        prop_assert_eq!(u.depth(), t.depth());
        let before: BTreeSet<Label> = t.known_classes.clone();
        prop_assert!(before.is_subset(&u.known_classes));
    }

    #[test]
    fn centroids_and_gain_ignore_sample_order(points in labelled_points(), seed in any::<u64>()) {
        let d = to_dataset(&points);
        let mut shuffled = points.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng(seed));
        let e = to_dataset(&shuffled);
        let a = class_centroids(&d, d.classes()).unwrap();
        let b = class_centroids(&e, e.classes()).unwrap();
        for (x, y) in a.entries().iter().zip(b.entries()) {
            prop_assert_eq!(x.label, y.label);
            for (u, v) in x.centroid.iter().zip(&y.centroid) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
        if a.len() >= 2 {
            let ga = choose_best_split_exhaustive(&d, &a, GainMode::SizeWeighted).unwrap();
            let gb = choose_best_split_exhaustive(&e, &a, GainMode::SizeWeighted).unwrap();
            prop_assert!((ga.gain - gb.gain).abs() < 1e-12);
        }
    }
}
