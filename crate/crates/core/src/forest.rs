//! Bagged ensembles of NCM trees.
//!
//! Each member keeps its bootstrap replicate (as sample ids) and its latest
//! out-of-bag error. Members also remember the normalization frame they were
//! grown in: a forest updated over several rounds can hold trees whose
//! centroids live in differently normalized spaces, and every query is
//! normalized per frame before it reaches a tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, BootstrapSet, Dataset, Label, NormalizationStats};
use crate::error::{HirfError, Result};
use crate::tree::{argmax, ClassProbs, NcmNode, NcmTree, TreeConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    /// Argmax of the mean leaf distribution.
    #[default]
    Soft,
    /// Majority over per-tree argmax labels.
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    pub vote: VoteMode,
    /// Learning rate of out-of-bag boosting; 0 disables it.
    pub alpha: f64,
    /// Worker threads for per-tree work; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 25,
            tree: TreeConfig::default(),
            vote: VoteMode::Soft,
            alpha: 0.1,
            threads: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(HirfError::InvalidConfig(
                "a forest needs at least one tree".into(),
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(HirfError::InvalidConfig(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        self.tree.validate()
    }
}

/// Index of a normalization frame within a forest.
pub type FrameId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub tree: NcmTree,
    pub boot: BootstrapSet,
    /// Error used for the next threshold estimate (boosted when applicable).
    pub oob: f64,
    /// Last measured misclassification rate on the left-out set.
    pub raw_oob: f64,
    /// The left-out set was empty when `raw_oob` was measured.
    pub oob_empty: bool,
    pub frame: FrameId,
}

impl Member {
    /// Amount by which boosting has lifted this member's error.
    pub fn lift(&self) -> f64 {
        self.oob - self.raw_oob
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub(crate) config: ForestConfig,
    pub(crate) frames: BTreeMap<FrameId, NormalizationStats>,
    pub(crate) members: Vec<Member>,
    pub(crate) dim: usize,
}

/// Misclassification rate of one tree on its left-out samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OobMeasure {
    pub error: f64,
    pub n_left_out: usize,
    /// No left-out samples; `error` is then 0.
    pub empty: bool,
}

/// Wall-clock breakdown of an offline training run, in milliseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTiming {
    /// Normalizer fit plus bootstrap draws and growth of every tree.
    pub train_ms: f64,
    pub oob_ms: f64,
    pub grow_ms: Vec<f64>,
}

/// Derives one independent generator per tree from the caller's stream.
pub(crate) fn tree_rngs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|_| ChaCha8Rng::seed_from_u64(rng.random()))
        .collect()
}

pub(crate) fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs `f` over `0..n`, in parallel unless `threads == 1`. Output order
/// follows the index.
pub(crate) fn par_map<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads == 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HirfError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Misclassification rate of `tree` on `frame_data` minus the ids in `boot`.
/// `frame_data` must already be in the tree's normalization frame.
pub(crate) fn measure_oob(tree: &NcmTree, boot: &BootstrapSet, frame_data: &Dataset) -> OobMeasure {
    let drawn = boot.distinct();
    let mut n = 0usize;
    let mut wrong = 0usize;
    for s in frame_data.iter().filter(|s| !drawn.contains(&s.id)) {
        n += 1;
        if argmax(tree.probs(&s.x)) != Some(s.y) {
            wrong += 1;
        }
    }
    if n == 0 {
        OobMeasure {
            error: 0.0,
            n_left_out: 0,
            empty: true,
        }
    } else {
        OobMeasure {
            error: wrong as f64 / n as f64,
            n_left_out: n,
            empty: false,
        }
    }
}

/// Grows one tree on a fresh bootstrap of `data`, returning it with its
/// replicate and the elapsed milliseconds.
pub(crate) fn grow_member_tree(
    data: &Dataset,
    normalized: &Dataset,
    tree_index: usize,
    config: &TreeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(NcmTree, BootstrapSet, f64)> {
    let start = Instant::now();
    let boot = data::bootstrap(data, tree_index, rng)?;
    let idx = boot.indices_in(normalized);
    let tree = NcmTree::grow_on(normalized, idx, config, rng)?;
    Ok((tree, boot, millis(start)))
}

/// Trains `config.n_trees` trees, each on its own bootstrap of `data`, and
/// records each tree's out-of-bag error.
pub fn train_offline<R: Rng + ?Sized>(
    data: &Dataset,
    config: &ForestConfig,
    rng: &mut R,
) -> Result<Forest> {
    train_offline_timed(data, config, rng).map(|(f, _)| f)
}

pub fn train_offline_timed<R: Rng + ?Sized>(
    data: &Dataset,
    config: &ForestConfig,
    rng: &mut R,
) -> Result<(Forest, TrainTiming)> {
    config.validate()?;
    if data.is_empty() {
        return Err(HirfError::EmptyDataset);
    }
    let rngs = tree_rngs(rng, config.n_trees);

    let start = Instant::now();
    let stats = data::fit_normalizer(data)?;
    let normalized = data.normalized(&stats)?;
    let grown = par_map(config.threads, config.n_trees, |i| {
        let mut r = rngs[i].clone();
        grow_member_tree(data, &normalized, i, &config.tree, &mut r)
    })?;
    let train_ms = millis(start);

    let start = Instant::now();
    let oob = par_map(config.threads, grown.len(), |i| {
        Ok(measure_oob(&grown[i].0, &grown[i].1, &normalized))
    })?;
    let oob_ms = millis(start);

    let mut grow_ms = Vec::with_capacity(grown.len());
    let members = grown
        .into_iter()
        .zip(oob)
        .map(|((tree, boot, ms), m)| {
            grow_ms.push(ms);
            Member {
                tree,
                boot,
                oob: m.error,
                raw_oob: m.error,
                oob_empty: m.empty,
                frame: 0,
            }
        })
        .collect();
    let forest = Forest {
        config: config.clone(),
        frames: BTreeMap::from([(0, stats)]),
        members,
        dim: data.dim(),
    };
    Ok((
        forest,
        TrainTiming {
            train_ms,
            oob_ms,
            grow_ms,
        },
    ))
}

impl Forest {
    /// Assembles a forest from parts, e.g. hand-built trees in tests.
    pub fn from_members(
        config: ForestConfig,
        frames: BTreeMap<FrameId, NormalizationStats>,
        members: Vec<Member>,
    ) -> Result<Self> {
        config.validate()?;
        if members.len() != config.n_trees {
            return Err(HirfError::InvalidConfig(format!(
                "{} members for a {}-tree forest",
                members.len(),
                config.n_trees
            )));
        }
        let dim = members[0].tree.dim;
        for m in &members {
            let stats = frames.get(&m.frame).ok_or_else(|| {
                HirfError::InvalidConfig(format!("unknown normalization frame {}", m.frame))
            })?;
            if m.tree.dim != dim || stats.dim() != dim {
                return Err(HirfError::DimensionMismatch {
                    expected: dim,
                    actual: m.tree.dim.max(stats.dim()),
                });
            }
        }
        Ok(Self {
            config,
            frames,
            members,
            dim,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> impl Iterator<Item = &NcmTree> {
        self.members.iter().map(|m| &m.tree)
    }

    pub fn boots(&self) -> impl Iterator<Item = &BootstrapSet> {
        self.members.iter().map(|m| &m.boot)
    }

    pub fn oob_errors(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.oob).collect()
    }

    pub fn frames(&self) -> &BTreeMap<FrameId, NormalizationStats> {
        &self.frames
    }

    pub fn frame_of(&self, tree_index: usize) -> &NormalizationStats {
        &self.frames[&self.members[tree_index].frame]
    }

    /// Union of the classes the members have seen.
    pub fn known_classes(&self) -> BTreeSet<Label> {
        self.trees()
            .flat_map(|t| t.known_classes.iter().copied())
            .collect()
    }

    /// Labels carrying positive probability in at least one leaf.
    pub fn labels_with_mass(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        for t in self.trees() {
            for leaf in t.leaves() {
                if let NcmNode::Leaf { probs, .. } = leaf {
                    out.extend(probs.iter().filter(|(_, &p)| p > 0.0).map(|(&l, _)| l));
                }
            }
        }
        out
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(HirfError::DimensionMismatch {
                expected: self.dim,
                actual: len,
            });
        }
        Ok(())
    }

    fn normalize_per_frame(&self, x: &[f64]) -> BTreeMap<FrameId, Vec<f64>> {
        self.frames
            .iter()
            .map(|(&id, stats)| (id, stats.apply(x)))
            .collect()
    }

    /// `data` normalized in every frame of the forest.
    pub(crate) fn frame_views(&self, data: &Dataset) -> Result<BTreeMap<FrameId, Dataset>> {
        self.frames
            .iter()
            .map(|(&id, stats)| Ok((id, data.normalized(stats)?)))
            .collect()
    }

    fn vote<'a, I>(&self, leaf_probs: I) -> Label
    where
        I: Iterator<Item = &'a ClassProbs>,
    {
        let mut acc: BTreeMap<Label, f64> = BTreeMap::new();
        match self.config.vote {
            VoteMode::Soft => {
                for probs in leaf_probs {
                    for (&l, &p) in probs {
                        *acc.entry(l).or_insert(0.0) += p;
                    }
                }
            }
            VoteMode::Hard => {
                for probs in leaf_probs {
                    if let Some(l) = argmax(probs) {
                        *acc.entry(l).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        argmax(&acc).expect("a forest has at least one tree")
    }

    /// Mean of the members' leaf distributions for `x`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassProbs> {
        self.check_dim(x.len())?;
        let views = self.normalize_per_frame(x);
        let mut acc = ClassProbs::new();
        for m in &self.members {
            for (&l, &p) in m.tree.probs(&views[&m.frame]) {
                *acc.entry(l).or_insert(0.0) += p;
            }
        }
        let s = self.members.len() as f64;
        acc.values_mut().for_each(|p| *p /= s);
        Ok(acc)
    }

    /// Ensemble label for `x`; ties go to the smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.check_dim(x.len())?;
        let views = self.normalize_per_frame(x);
        Ok(self.vote(self.members.iter().map(|m| m.tree.probs(&views[&m.frame]))))
    }

    /// Predictions for every sample of `data`, in order.
    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Label>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dim(data.dim())?;
        let views = self.frame_views(data)?;
        Ok((0..data.len())
            .map(|i| {
                self.vote(
                    self.members
                        .iter()
                        .map(|m| m.tree.probs(&views[&m.frame].samples()[i].x)),
                )
            })
            .collect())
    }

    /// Fraction of `test` predicted correctly; an empty test set scores 0.
    pub fn accuracy(&self, test: &Dataset) -> Result<f64> {
        if test.is_empty() {
            return Ok(0.0);
        }
        let predicted = self.predict_all(test)?;
        let correct = predicted
            .iter()
            .zip(test.iter())
            .filter(|(p, s)| **p == s.y)
            .count();
        Ok(correct as f64 / test.len() as f64)
    }

    /// Out-of-bag error of member `tree_index` on `data` minus its replicate.
    pub fn oob_error(&self, tree_index: usize, data: &Dataset) -> Result<OobMeasure> {
        let member = self
            .members
            .get(tree_index)
            .ok_or_else(|| HirfError::InvalidConfig(format!("no tree at index {tree_index}")))?;
        if data.is_empty() {
            return Ok(measure_oob(&member.tree, &member.boot, data));
        }
        self.check_dim(data.dim())?;
        let view = data.normalized(&self.frames[&member.frame])?;
        Ok(measure_oob(&member.tree, &member.boot, &view))
    }

    /// Hex digests of every member's split structure, in member order.
    pub fn structure_digests(&self) -> Vec<String> {
        self.trees().map(NcmTree::structure_digest).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(reader)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledSample;
    use crate::tree::{CentroidSet, ClassCentroid, Side};

    fn ds(rows: &[(&[f64], u32)]) -> Dataset {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, (x, y))| LabeledSample::new(i as u64, x.to_vec(), Label(*y)))
            .collect();
        Dataset::new(samples).unwrap()
    }

    fn leaf(probs: &[(u32, f64)]) -> NcmTree {
        NcmTree {
            root: NcmNode::Leaf {
                probs: probs.iter().map(|&(l, p)| (Label(l), p)).collect(),
                support: 1,
            },
            max_depth: 0,
            known_classes: probs.iter().map(|&(l, _)| Label(l)).collect(),
            dim: 1,
        }
    }

    fn identity_frames() -> BTreeMap<FrameId, NormalizationStats> {
        BTreeMap::from([(
            0,
            NormalizationStats {
                mean: vec![0.0],
                std: vec![1.0],
            },
        )])
    }

    fn member(tree: NcmTree, ids: Vec<u64>) -> Member {
        Member {
            tree,
            boot: BootstrapSet {
                tree_index: 0,
                sample_ids: ids,
            },
            oob: 0.0,
            raw_oob: 0.0,
            oob_empty: false,
            frame: 0,
        }
    }

    fn forest_of(trees: Vec<NcmTree>, vote: VoteMode) -> Forest {
        let config = ForestConfig {
            n_trees: trees.len(),
            vote,
            ..ForestConfig::default()
        };
        let members = trees.into_iter().map(|t| member(t, vec![])).collect();
        Forest::from_members(config, identity_frames(), members).unwrap()
    }

    #[test]
    fn hard_vote_majority() {
        let f = forest_of(
            vec![leaf(&[(1, 1.0)]), leaf(&[(2, 1.0)]), leaf(&[(2, 1.0)])],
            VoteMode::Hard,
        );
        assert_eq!(f.predict(&[0.0]).unwrap(), Label(2));
    }

    #[test]
    fn soft_vote_can_differ_from_hard() {
        let trees = vec![
            leaf(&[(1, 0.9), (2, 0.1)]),
            leaf(&[(1, 0.4), (2, 0.6)]),
            leaf(&[(1, 0.4), (2, 0.6)]),
        ];
        assert_eq!(
            forest_of(trees.clone(), VoteMode::Soft)
                .predict(&[0.0])
                .unwrap(),
            Label(1)
        );
        assert_eq!(
            forest_of(trees, VoteMode::Hard).predict(&[0.0]).unwrap(),
            Label(2)
        );
    }

    #[test]
    fn vote_ties_go_to_smallest_label() {
        let f = forest_of(vec![leaf(&[(5, 1.0)]), leaf(&[(3, 1.0)])], VoteMode::Hard);
        assert_eq!(f.predict(&[0.0]).unwrap(), Label(3));
        let f = forest_of(vec![leaf(&[(5, 1.0)]), leaf(&[(3, 1.0)])], VoteMode::Soft);
        assert_eq!(f.predict(&[0.0]).unwrap(), Label(3));
    }

    #[test]
    fn dimension_checked() {
        let f = forest_of(vec![leaf(&[(1, 1.0)])], VoteMode::Soft);
        assert!(matches!(
            f.predict(&[0.0, 1.0]),
            Err(HirfError::DimensionMismatch { .. })
        ));
    }

    fn threshold_tree() -> NcmTree {
        // routes x < 1 to class 1, x > 1 to class 2
        NcmTree {
            root: NcmNode::Internal {
                centroids: CentroidSet::new(vec![
                    ClassCentroid {
                        label: Label(1),
                        centroid: vec![0.0],
                    },
                    ClassCentroid {
                        label: Label(2),
                        centroid: vec![2.0],
                    },
                ])
                .unwrap(),
                assignment: [(Label(1), Side::Left), (Label(2), Side::Right)].into(),
                left: Box::new(NcmNode::Leaf {
                    probs: [(Label(1), 1.0)].into(),
                    support: 1,
                }),
                right: Box::new(NcmNode::Leaf {
                    probs: [(Label(2), 1.0)].into(),
                    support: 1,
                }),
            },
            max_depth: 1,
            known_classes: [Label(1), Label(2)].into(),
            dim: 1,
        }
    }

    #[test]
    fn oob_error_counts_left_out_mistakes() {
        // ids 0,1 in the replicate; 8 left out, 2 of them mislabeled for the tree
        let data = ds(&[
            (&[0.0], 1),
            (&[0.1], 1),
            (&[0.2], 1),
            (&[0.3], 1),
            (&[0.4], 2),
            (&[1.8], 2),
            (&[1.9], 2),
            (&[2.0], 2),
            (&[2.1], 1),
            (&[2.2], 2),
        ]);
        let config = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let f = Forest::from_members(
            config,
            identity_frames(),
            vec![member(threshold_tree(), vec![0, 1, 1])],
        )
        .unwrap();
        let m = f.oob_error(0, &data).unwrap();
        assert_eq!(m.n_left_out, 8);
        assert_eq!(m.error, 0.25);
        assert!(!m.empty);

        let only_drawn = data.filter(|s| s.id <= 1);
        let m = f.oob_error(0, &only_drawn).unwrap();
        assert!(m.empty);
        assert_eq!(m.error, 0.0);

        let clean = data.filter(|s| s.id != 4 && s.id != 8);
        assert_eq!(f.oob_error(0, &clean).unwrap().error, 0.0);
    }

    #[test]
    fn accuracy_examples() {
        let config = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let f = Forest::from_members(
            config,
            identity_frames(),
            vec![member(threshold_tree(), vec![])],
        )
        .unwrap();
        assert_eq!(f.accuracy(&ds(&[(&[0.0], 1)])).unwrap(), 1.0);
        assert_eq!(f.accuracy(&ds(&[(&[0.0], 1), (&[0.0], 2)])).unwrap(), 0.5);
    }

    #[test]
    fn zero_trees_rejected() {
        let config = ForestConfig {
            n_trees: 0,
            ..ForestConfig::default()
        };
        let data = ds(&[(&[0.0], 1)]);
        assert!(train_offline(&data, &config, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let config = ForestConfig {
            alpha: -0.5,
            ..ForestConfig::default()
        };
        assert!(train_offline(&data, &config, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn pure_data_gives_leaf_forest() {
        let data = ds(&[(&[0.0], 4), (&[1.0], 4), (&[3.0], 4)]);
        let config = ForestConfig {
            n_trees: 5,
            ..ForestConfig::default()
        };
        let f = train_offline(&data, &config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(f.trees().all(|t| t.root.is_leaf()));
        assert_eq!(f.accuracy(&data).unwrap(), 1.0);
        assert_eq!(f.len(), 5);
        assert_eq!(f.boots().count(), 5);
        assert_eq!(f.oob_errors().len(), 5);
    }

    #[test]
    fn snapshot_round_trip() {
        let data = ds(&[
            (&[0.0], 1),
            (&[0.3], 1),
            (&[0.7], 1),
            (&[5.0], 2),
            (&[5.5], 2),
            (&[6.1], 2),
        ]);
        let config = ForestConfig {
            n_trees: 3,
            threads: 1,
            ..ForestConfig::default()
        };
        let f = train_offline(&data, &config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let json = f.to_json().unwrap();
        let back = Forest::from_json(&json).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json().unwrap(), json);
    }
}
