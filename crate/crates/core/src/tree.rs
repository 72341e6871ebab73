//! Nearest-class-mean decision trees.
//!
//! An internal node keeps the centroids of a random subset of the classes
//! that reached it during growth, together with a left/right assignment of
//! those classes. A sample is routed to the side of its nearest centroid.
//! Leaves hold class-probability maps, which [`NcmTree::refresh_leaves`] can
//! recompute from new data without touching any split.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Label};
use crate::error::{HirfError, Result};

pub type ClassProbs = BTreeMap<Label, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroid {
    pub label: Label,
    pub centroid: Vec<f64>,
}

/// Class centroids sorted by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CentroidSet {
    entries: Vec<ClassCentroid>,
}

impl CentroidSet {
    pub fn new(mut entries: Vec<ClassCentroid>) -> Result<Self> {
        entries.sort_by_key(|e| e.label);
        if let Some(w) = entries.windows(2).find(|w| w[0].label == w[1].label) {
            return Err(HirfError::InvalidConfig(format!(
                "duplicate centroid for class {}",
                w[0].label
            )));
        }
        if let Some(first) = entries.first() {
            let dim = first.centroid.len();
            if let Some(bad) = entries.iter().find(|e| e.centroid.len() != dim) {
                return Err(HirfError::DimensionMismatch {
                    expected: dim,
                    actual: bad.centroid.len(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ClassCentroid] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn get(&self, label: Label) -> Option<&[f64]> {
        self.entries
            .binary_search_by_key(&label, |e| e.label)
            .ok()
            .map(|i| self.entries[i].centroid.as_slice())
    }

    /// Position of the centroid nearest to `x` in squared Euclidean distance.
    /// Entries are label-sorted and only a strictly smaller distance replaces
    /// the incumbent, so ties resolve to the smallest label.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let d = squared_distance(x, &e.centroid);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Mean feature vector of each listed class.
pub fn class_centroids(data: &Dataset, classes: &BTreeSet<Label>) -> Result<CentroidSet> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let wanted: Vec<Label> = classes.iter().copied().collect();
    centroids_of(data, &idx, &wanted)
}

// `wanted` must be sorted.
fn centroids_of(data: &Dataset, idx: &[usize], wanted: &[Label]) -> Result<CentroidSet> {
    let dim = data.dim();
    let mut sums = vec![vec![0.0; dim]; wanted.len()];
    let mut counts = vec![0usize; wanted.len()];
    let samples = data.samples();
    for &i in idx {
        let s = &samples[i];
        if let Ok(pos) = wanted.binary_search(&s.y) {
            counts[pos] += 1;
            for (acc, v) in sums[pos].iter_mut().zip(&s.x) {
                *acc += v;
            }
        }
    }
    let mut entries = Vec::with_capacity(wanted.len());
    for ((&label, mut sum), n) in wanted.iter().zip(sums).zip(counts) {
        if n == 0 {
            return Err(HirfError::EmptyClass(label));
        }
        let inv = 1.0 / n as f64;
        sum.iter_mut().for_each(|v| *v *= inv);
        entries.push(ClassCentroid {
            label,
            centroid: sum,
        });
    }
    Ok(CentroidSet { entries })
}

/// How child entropies are combined into a split's information gain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// `E_n - (|L|/|n|) E_L - (|R|/|n|) E_R`.
    #[default]
    SizeWeighted,
    /// `E_n - (E_L + E_R)`.
    Unweighted,
}

/// Natural-log Shannon entropy of a class histogram, summed in the order
/// given. Empty histograms have entropy 0.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut e = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            e -= p * p.ln();
        }
    }
    e
}

fn gain_from_counts(parent: &[usize], left: &[usize], right: &[usize], mode: GainMode) -> f64 {
    let e_n = entropy_from_counts(parent);
    let e_l = entropy_from_counts(left);
    let e_r = entropy_from_counts(right);
    match mode {
        GainMode::Unweighted => e_n - (e_l + e_r),
        GainMode::SizeWeighted => {
            let n: usize = parent.iter().sum();
            if n == 0 {
                return 0.0;
            }
            let w_l = left.iter().sum::<usize>() as f64 / n as f64;
            let w_r = right.iter().sum::<usize>() as f64 / n as f64;
            e_n - (w_l * e_l + w_r * e_r)
        }
    }
}

fn histogram<'a>(labels: impl Iterator<Item = &'a Label>, order: &[Label]) -> Vec<usize> {
    let mut h = vec![0; order.len()];
    for l in labels {
        if let Ok(p) = order.binary_search(l) {
            h[p] += 1;
        }
    }
    h
}

/// Information gain of splitting `parent` into `left` and `right`.
pub fn information_gain(parent: &Dataset, left: &Dataset, right: &Dataset, mode: GainMode) -> f64 {
    let order: Vec<Label> = parent.classes().iter().copied().collect();
    let h = |d: &Dataset| histogram(d.iter().map(|s| &s.y), &order);
    gain_from_counts(&h(parent), &h(left), &h(right), mode)
}

/// A left/right assignment of a node's centroid classes and its gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub assignment: BTreeMap<Label, Side>,
    pub gain: f64,
}

/// How candidate assignments are generated at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSearch {
    /// `trials` independent coin-flip assignments; one-sided draws are
    /// redrawn up to `max_retries` times.
    Random { trials: usize, max_retries: usize },
    /// Every admissible assignment, in increasing bitmask order where bit `j`
    /// set sends the `j`-th centroid (label order) right.
    Exhaustive,
}

impl Default for SplitSearch {
    fn default() -> Self {
        SplitSearch::Random {
            trials: 10,
            max_retries: 50,
        }
    }
}

const EXHAUSTIVE_LIMIT: usize = 20;

// Per-centroid class histograms of the samples whose nearest centroid it is.
// Any assignment's child histograms are sums of these rows, so candidates are
// scored without re-routing the data.
struct NodeStats {
    by_centroid: Vec<Vec<usize>>,
    parent: Vec<usize>,
}

impl NodeStats {
    fn new(nearest: &[usize], labels: &[Label], n_centroids: usize, order: &[Label]) -> Self {
        let mut by_centroid = vec![vec![0usize; order.len()]; n_centroids];
        let mut parent = vec![0usize; order.len()];
        for (&c, l) in nearest.iter().zip(labels) {
            let p = order.binary_search(l).expect("label in node order");
            by_centroid[c][p] += 1;
            parent[p] += 1;
        }
        Self {
            by_centroid,
            parent,
        }
    }

    fn score(&self, sides: &[Side], mode: GainMode) -> f64 {
        let width = self.parent.len();
        let mut left = vec![0usize; width];
        let mut right = vec![0usize; width];
        for (row, side) in self.by_centroid.iter().zip(sides) {
            let acc = match side {
                Side::Left => &mut left,
                Side::Right => &mut right,
            };
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        gain_from_counts(&self.parent, &left, &right, mode)
    }
}

fn search_sides<R: Rng + ?Sized>(
    stats: &NodeStats,
    n_centroids: usize,
    search: SplitSearch,
    mode: GainMode,
    rng: &mut R,
) -> Result<(Vec<Side>, f64)> {
    if n_centroids < 2 {
        return Err(HirfError::TooFewClasses(n_centroids));
    }
    let mut best: Option<(Vec<Side>, f64)> = None;
    let mut consider = |sides: Vec<Side>| {
        let gain = stats.score(&sides, mode);
        if best.as_ref().is_none_or(|(_, g)| gain > *g) {
            best = Some((sides, gain));
        }
    };
    match search {
        SplitSearch::Exhaustive => {
            if n_centroids > EXHAUSTIVE_LIMIT {
                return Err(HirfError::InvalidConfig(format!(
                    "exhaustive split search over {n_centroids} classes exceeds {EXHAUSTIVE_LIMIT}"
                )));
            }
            for mask in 1..(1u64 << n_centroids) - 1 {
                let sides = (0..n_centroids)
                    .map(|j| {
                        if mask >> j & 1 == 1 {
                            Side::Right
                        } else {
                            Side::Left
                        }
                    })
                    .collect();
                consider(sides);
            }
        }
        SplitSearch::Random {
            trials,
            max_retries,
        } => {
            for _ in 0..trials.max(1) {
                for _ in 0..=max_retries {
                    let sides: Vec<Side> = (0..n_centroids)
                        .map(|_| {
                            if rng.random::<bool>() {
                                Side::Left
                            } else {
                                Side::Right
                            }
                        })
                        .collect();
                    let lefts = sides.iter().filter(|s| **s == Side::Left).count();
                    if lefts > 0 && lefts < n_centroids {
                        consider(sides);
                        break;
                    }
                }
            }
        }
    }
    best.ok_or(HirfError::NoAdmissibleSplit(trials_of(search)))
}

fn trials_of(search: SplitSearch) -> usize {
    match search {
        SplitSearch::Random {
            trials,
            max_retries,
        } => trials.max(1) * (max_retries + 1),
        SplitSearch::Exhaustive => 0,
    }
}

fn to_assignment(centroids: &CentroidSet, sides: &[Side]) -> BTreeMap<Label, Side> {
    centroids.labels().zip(sides.iter().copied()).collect()
}

/// Best of `trials` random left/right assignments of the centroid classes,
/// scored by information gain of the induced partition of `data`.
pub fn choose_best_split<R: Rng + ?Sized>(
    data: &Dataset,
    centroids: &CentroidSet,
    trials: usize,
    mode: GainMode,
    rng: &mut R,
) -> Result<SplitCandidate> {
    let search = SplitSearch::Random {
        trials,
        max_retries: 50,
    };
    choose_split_with(data, centroids, search, mode, rng)
}

/// Best admissible assignment over full enumeration.
pub fn choose_best_split_exhaustive(
    data: &Dataset,
    centroids: &CentroidSet,
    mode: GainMode,
) -> Result<SplitCandidate> {
    // Exhaustive search never draws from the rng.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    choose_split_with(data, centroids, SplitSearch::Exhaustive, mode, &mut rng)
}

pub fn choose_split_with<R: Rng + ?Sized>(
    data: &Dataset,
    centroids: &CentroidSet,
    search: SplitSearch,
    mode: GainMode,
    rng: &mut R,
) -> Result<SplitCandidate> {
    if centroids.len() < 2 {
        return Err(HirfError::TooFewClasses(centroids.len()));
    }
    let order: Vec<Label> = data.classes().iter().copied().collect();
    let nearest: Vec<usize> = data.iter().map(|s| centroids.nearest(&s.x)).collect();
    let labels: Vec<Label> = data.iter().map(|s| s.y).collect();
    let stats = NodeStats::new(&nearest, &labels, centroids.len(), &order);
    let (sides, gain) = search_sides(&stats, centroids.len(), search, mode, rng)?;
    Ok(SplitCandidate {
        assignment: to_assignment(centroids, &sides),
        gain,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NcmNode {
    Internal {
        centroids: CentroidSet,
        assignment: BTreeMap<Label, Side>,
        left: Box<NcmNode>,
        right: Box<NcmNode>,
    },
    Leaf {
        probs: ClassProbs,
        support: usize,
    },
}

impl NcmNode {
    fn leaf_from_counts(order: &[Label], counts: &[usize]) -> Self {
        let support: usize = counts.iter().sum();
        let probs = order
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&l, &c)| (l, c as f64 / support as f64))
            .collect();
        NcmNode::Leaf { probs, support }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, NcmNode::Leaf { .. })
    }

    /// Side of `x` at an internal node; `None` at a leaf.
    pub fn route(&self, x: &[f64]) -> Option<Side> {
        match self {
            NcmNode::Internal {
                centroids,
                assignment,
                ..
            } => {
                let k = centroids.entries()[centroids.nearest(x)].label;
                Some(assignment[&k])
            }
            NcmNode::Leaf { .. } => None,
        }
    }

    fn depth(&self) -> usize {
        match self {
            NcmNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            NcmNode::Leaf { .. } => 0,
        }
    }

    fn count(&self) -> (usize, usize) {
        match self {
            NcmNode::Internal { left, right, .. } => {
                let (li, ll) = left.count();
                let (ri, rl) = right.count();
                (1 + li + ri, ll + rl)
            }
            NcmNode::Leaf { .. } => (0, 1),
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a NcmNode>) {
        match self {
            NcmNode::Internal { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
            leaf => out.push(leaf),
        }
    }
}

/// Side of `x` at an internal node: the side assigned to its nearest
/// centroid's class.
pub fn route(x: &[f64], node: &NcmNode) -> Result<Side> {
    match node {
        NcmNode::Internal { centroids, .. } => {
            let dim = centroids.entries()[0].centroid.len();
            if x.len() != dim {
                return Err(HirfError::DimensionMismatch {
                    expected: dim,
                    actual: x.len(),
                });
            }
            Ok(node.route(x).expect("internal node"))
        }
        NcmNode::Leaf { .. } => Err(HirfError::InvalidConfig("cannot route at a leaf".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub search: SplitSearch,
    /// Upper bound on the class subset sampled at each node.
    pub class_cap: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples: usize,
    pub gain: GainMode,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 20,
            search: SplitSearch::default(),
            class_cap: 32,
            min_samples: 2,
            gain: GainMode::SizeWeighted,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_cap < 2 {
            return Err(HirfError::InvalidConfig(format!(
                "class_cap must be at least 2, got {}",
                self.class_cap
            )));
        }
        if let SplitSearch::Random { trials: 0, .. } = self.search {
            return Err(HirfError::InvalidConfig("trials must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcmTree {
    pub root: NcmNode,
    pub max_depth: usize,
    pub known_classes: BTreeSet<Label>,
    pub dim: usize,
}

/// Grows a tree on every sample of `data`.
pub fn grow<R: Rng + ?Sized>(data: &Dataset, config: &TreeConfig, rng: &mut R) -> Result<NcmTree> {
    let idx: Vec<usize> = (0..data.len()).collect();
    NcmTree::grow_on(data, idx, config, rng)
}

impl NcmTree {
    /// Grows a tree on the samples of `data` at positions `idx`; repeated
    /// positions count with multiplicity, as in a bootstrap replicate.
    pub fn grow_on<R: Rng + ?Sized>(
        data: &Dataset,
        idx: Vec<usize>,
        config: &TreeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if idx.is_empty() {
            return Err(HirfError::EmptyDataset);
        }
        config.validate()?;
        let samples = data.samples();
        let known_classes: BTreeSet<Label> = idx.iter().map(|&i| samples[i].y).collect();
        let root = Grower { data, config }.build(idx, 0, rng);
        Ok(Self {
            root,
            max_depth: config.max_depth,
            known_classes,
            dim: data.dim(),
        })
    }

    /// Unchecked routing to a leaf.
    pub fn leaf(&self, x: &[f64]) -> &NcmNode {
        let mut node = &self.root;
        while let NcmNode::Internal { left, right, .. } = node {
            node = match node.route(x).expect("internal node") {
                Side::Left => left,
                Side::Right => right,
            };
        }
        node
    }

    /// Unchecked leaf distribution for `x`.
    pub fn probs(&self, x: &[f64]) -> &ClassProbs {
        match self.leaf(x) {
            NcmNode::Leaf { probs, .. } => probs,
            NcmNode::Internal { .. } => unreachable!(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(HirfError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<&ClassProbs> {
        self.check_dim(x)?;
        Ok(self.probs(x))
    }

    /// Most probable class; ties go to the smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.check_dim(x)?;
        Ok(argmax(self.probs(x)).expect("leaves are never empty"))
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_internal(&self) -> usize {
        self.root.count().0
    }

    pub fn n_leaves(&self) -> usize {
        self.root.count().1
    }

    pub fn leaves(&self) -> Vec<&NcmNode> {
        let mut out = Vec::new();
        self.root.leaves(&mut out);
        out
    }

    /// Recomputes leaf distributions from all samples of `data`.
    pub fn refresh_leaves(&self, data: &Dataset) -> Result<Self> {
        if !data.is_empty() && data.dim() != self.dim {
            return Err(HirfError::DimensionMismatch {
                expected: self.dim,
                actual: data.dim(),
            });
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        Ok(self.refresh_leaves_on(data, &idx))
    }

    /// Recomputes leaf distributions from the samples of `data` at `idx`
    /// (with multiplicity). Splits are left untouched. A leaf reached by no
    /// sample keeps its previous distribution.
    pub fn refresh_leaves_on(&self, data: &Dataset, idx: &[usize]) -> Self {
        // Leaves are numbered depth-first, left before right, which is also
        // the order `rewrite_leaves` visits them in.
        let position: HashMap<*const NcmNode, usize> = self
            .leaves()
            .into_iter()
            .enumerate()
            .map(|(i, leaf)| (leaf as *const NcmNode, i))
            .collect();
        let mut per_leaf: Vec<BTreeMap<Label, usize>> = vec![BTreeMap::new(); position.len()];
        let samples = data.samples();
        for &i in idx {
            let s = &samples[i];
            let leaf = position[&(self.leaf(&s.x) as *const NcmNode)];
            *per_leaf[leaf].entry(s.y).or_insert(0) += 1;
        }
        let mut root = self.root.clone();
        let mut next = 0;
        rewrite_leaves(&mut root, &per_leaf, &mut next);
        let mut known_classes = self.known_classes.clone();
        known_classes.extend(idx.iter().map(|&i| samples[i].y));
        Self {
            root,
            max_depth: self.max_depth,
            known_classes,
            dim: self.dim,
        }
    }

    /// Hex SHA-256 of the JSON serialization with every leaf blanked out.
    /// Equal digests mean identical topology, centroids and assignments.
    pub fn structure_digest(&self) -> String {
        let mut value = serde_json::to_value(&self.root).expect("tree serializes");
        blank_leaves(&mut value);
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Most probable class of a distribution; ties go to the smallest label.
pub fn argmax(probs: &ClassProbs) -> Option<Label> {
    let mut best: Option<(Label, f64)> = None;
    for (&l, &p) in probs {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((l, p));
        }
    }
    best.map(|(l, _)| l)
}

fn rewrite_leaves(node: &mut NcmNode, per_leaf: &[BTreeMap<Label, usize>], next: &mut usize) {
    match node {
        NcmNode::Internal { left, right, .. } => {
            rewrite_leaves(left, per_leaf, next);
            rewrite_leaves(right, per_leaf, next);
        }
        NcmNode::Leaf { probs, support } => {
            let counts = &per_leaf[*next];
            *next += 1;
            let n: usize = counts.values().sum();
            if n > 0 {
                *probs = counts
                    .iter()
                    .map(|(&l, &c)| (l, c as f64 / n as f64))
                    .collect();
                *support = n;
            }
        }
    }
}

fn blank_leaves(value: &mut serde_json::Value) {
    if let serde_json::Value::Object(map) = value {
        if map.get("kind").and_then(|k| k.as_str()) == Some("leaf") {
            *value = serde_json::Value::Null;
            return;
        }
        for v in map.values_mut() {
            blank_leaves(v);
        }
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    config: &'a TreeConfig,
}

impl Grower<'_> {
    fn build<R: Rng + ?Sized>(&self, idx: Vec<usize>, depth: usize, rng: &mut R) -> NcmNode {
        let samples = self.data.samples();
        let counts = {
            let mut m: BTreeMap<Label, usize> = BTreeMap::new();
            for &i in &idx {
                *m.entry(samples[i].y).or_insert(0) += 1;
            }
            m
        };
        let order: Vec<Label> = counts.keys().copied().collect();
        let hist: Vec<usize> = counts.values().copied().collect();
        let make_leaf = || NcmNode::leaf_from_counts(&order, &hist);

        if order.len() < 2 || depth >= self.config.max_depth || idx.len() < self.config.min_samples
        {
            return make_leaf();
        }

        let subset: Vec<Label> = if order.len() <= self.config.class_cap {
            order.clone()
        } else {
            let mut picked: Vec<usize> =
                index::sample(rng, order.len(), self.config.class_cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|p| order[p]).collect()
        };
        let centroids =
            centroids_of(self.data, &idx, &subset).expect("subset classes are observed");

        let nearest: Vec<usize> = idx
            .iter()
            .map(|&i| centroids.nearest(&samples[i].x))
            .collect();
        let labels: Vec<Label> = idx.iter().map(|&i| samples[i].y).collect();
        let stats = NodeStats::new(&nearest, &labels, centroids.len(), &order);
        let Ok((sides, _)) = search_sides(
            &stats,
            centroids.len(),
            self.config.search,
            self.config.gain,
            rng,
        ) else {
            return make_leaf();
        };

        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for (&i, &c) in idx.iter().zip(&nearest) {
            match sides[c] {
                Side::Left => left_idx.push(i),
                Side::Right => right_idx.push(i),
            }
        }
        if left_idx.is_empty() || right_idx.is_empty() {
            return make_leaf();
        }
        drop(idx);

        let left = Box::new(self.build(left_idx, depth + 1, rng));
        let right = Box::new(self.build(right_idx, depth + 1, rng));
        NcmNode::Internal {
            assignment: to_assignment(&centroids, &sides),
            centroids,
            left,
            right,
        }
    }
}
