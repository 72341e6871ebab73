#![allow(dead_code)]

use std::collections::BTreeMap;

use hirf::data::{Dataset, Label, LabeledSample};
use hirf::tree::{CentroidSet, GainMode, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `per_class` points around each given centre, uniform jitter of `spread`.
pub fn blobs(centres: &[(u32, Vec<f64>)], per_class: usize, spread: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut samples = Vec::new();
    for (label, c) in centres {
        for _ in 0..per_class {
            let x = c
                .iter()
                .map(|v| v + r.random_range(-spread..=spread))
                .collect();
            let id = samples.len() as u64;
            samples.push(LabeledSample::new(id, x, Label(*label)));
        }
    }
    Dataset::new(samples).unwrap()
}

pub fn three_blobs(per_class: usize, seed: u64) -> Dataset {
    blobs(
        &[
            (1, vec![0.0, 0.0]),
            (2, vec![10.0, 0.0]),
            (3, vec![0.0, 10.0]),
        ],
        per_class,
        1.0,
        seed,
    )
}

/// Random small node: up to `max_classes` classes, up to `max_n` points in
/// the unit square scaled by 4, with every class present.
pub fn random_node(r: &mut ChaCha8Rng, max_classes: u32, max_n: usize) -> Dataset {
    let k = r.random_range(2..=max_classes);
    let n = r.random_range(k as usize..=max_n);
    let samples = (0..n)
        .map(|i| {
            let y = if i < k as usize {
                i as u32 + 1
            } else {
                r.random_range(1..=k)
            };
            let x = vec![r.random_range(0.0..4.0), r.random_range(0.0..4.0)];
            LabeledSample::new(i as u64, x, Label(y))
        })
        .collect();
    Dataset::new(samples).unwrap()
}

fn oracle_entropy(counts: &BTreeMap<Label, usize>) -> f64 {
    let n: usize = counts.values().sum();
    if n == 0 {
        return 0.0;
    }
    let mut e = 0.0;
    for &c in counts.values() {
        if c > 0 {
            let p = c as f64 / n as f64;
            e -= p * p.ln();
        }
    }
    e
}

fn oracle_nearest(centroids: &CentroidSet, x: &[f64]) -> Label {
    let mut best: Option<(f64, Label)> = None;
    for c in centroids.entries() {
        let d: f64 = c
            .centroid
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match best {
            Some((bd, bl)) if d > bd || (d == bd && c.label > bl) => {}
            _ => best = Some((d, c.label)),
        }
    }
    best.unwrap().1
}

/// Enumerates assignments in bitmask order (bit j set sends the j-th
/// smallest label right), routes every sample afresh and keeps the first
/// assignment with the strictly largest gain.
pub fn brute_force_split(
    data: &Dataset,
    centroids: &CentroidSet,
    mode: GainMode,
) -> (BTreeMap<Label, Side>, f64) {
    let labels: Vec<Label> = centroids.labels().collect();
    let k = labels.len();
    let mut parent = BTreeMap::new();
    for s in data {
        *parent.entry(s.y).or_insert(0usize) += 1;
    }
    let n = data.len() as f64;
    let mut best: Option<(BTreeMap<Label, Side>, f64)> = None;
    for mask in 1u32..(1 << k) - 1 {
        let assignment: BTreeMap<Label, Side> = labels
            .iter()
            .enumerate()
            .map(|(j, l)| {
                (
                    *l,
                    if mask >> j & 1 == 1 {
                        Side::Right
                    } else {
                        Side::Left
                    },
                )
            })
            .collect();
        let mut left: BTreeMap<Label, usize> = parent.keys().map(|l| (*l, 0)).collect();
        let mut right = left.clone();
        for s in data {
            match assignment[&oracle_nearest(centroids, &s.x)] {
                Side::Left => *left.get_mut(&s.y).unwrap() += 1,
                Side::Right => *right.get_mut(&s.y).unwrap() += 1,
            }
        }
        let (e_n, e_l, e_r) = (
            oracle_entropy(&parent),
            oracle_entropy(&left),
            oracle_entropy(&right),
        );
        let gain = match mode {
            GainMode::Unweighted => e_n - (e_l + e_r),
            GainMode::SizeWeighted => {
                let w_l = left.values().sum::<usize>() as f64 / n;
                let w_r = right.values().sum::<usize>() as f64 / n;
                e_n - (w_l * e_l + w_r * e_r)
            }
        };
        if best.as_ref().is_none_or(|(_, g)| gain > *g) {
            best = Some((assignment, gain));
        }
    }
    best.unwrap()
}
