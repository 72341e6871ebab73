//! Datasets, bootstrap sampling, z-score normalization and class-arrival
//! schedules.
//!
//! Every other module consumes [`Dataset`]s built here. A dataset is an
//! ordered list of labelled dense vectors with unique sample ids; ids are
//! what bootstrap replicates record, so a replicate can be re-resolved
//! against a later, larger dataset that still contains the original samples.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HirfError, Result};

pub type SampleId = u64;

/// Integer class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Label(pub u32);

// JSON object keys arrive as strings, so accept both spellings.
impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl serde::de::Visitor<'_> for LabelVisitor {
            type Value = Label;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer class label")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Label, E> {
                u32::try_from(v).map(Label).map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Label, E> {
                u32::try_from(v).map(Label).map_err(E::custom)
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Label, E> {
                v.parse().map(Label).map_err(E::custom)
            }
        }

        de.deserialize_any(LabelVisitor)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: SampleId,
    pub x: Vec<f64>,
    pub y: Label,
}

impl LabeledSample {
    pub fn new(id: SampleId, x: Vec<f64>, y: Label) -> Self {
        Self { id, x, y }
    }
}

/// An ordered collection of samples with uniform dimensionality and unique ids.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    classes: BTreeSet<Label>,
    dim: usize,
    index: HashMap<SampleId, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.samples == other.samples
    }
}

impl Dataset {
    /// Builds a dataset, checking that all samples share one dimension and
    /// that ids are unique. The dimension of an empty dataset is 0.
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.x.len());
        Self::with_dim(dim, samples)
    }

    /// Like [`Dataset::new`] but with an explicit dimension, so empty
    /// datasets can still carry one.
    pub fn with_dim(dim: usize, samples: Vec<LabeledSample>) -> Result<Self> {
        let mut index = HashMap::with_capacity(samples.len());
        let mut classes = BTreeSet::new();
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(HirfError::DimensionMismatch {
                    expected: dim,
                    actual: s.x.len(),
                });
            }
            if index.insert(s.id, i).is_some() {
                return Err(HirfError::DuplicateId(s.id));
            }
            classes.insert(s.y);
        }
        Ok(Self {
            samples,
            classes,
            dim,
            index,
        })
    }

    /// Builds a dataset from parallel feature rows and labels, numbering ids
    /// from zero.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: &[Label]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(HirfError::DimensionMismatch {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let samples = rows
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (x, &y))| LabeledSample::new(i as SampleId, x, y))
            .collect();
        Self::new(samples)
    }

    // Subsets of an already validated dataset skip the checks.
    fn subset_unchecked(&self, samples: Vec<LabeledSample>) -> Self {
        let index = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let classes = samples.iter().map(|s| s.y).collect();
        Self {
            samples,
            classes,
            dim: self.dim,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSample> {
        self.samples.iter()
    }

    /// The exact set of labels occurring in the samples.
    pub fn classes(&self) -> &BTreeSet<Label> {
        &self.classes
    }

    pub fn index_of(&self, id: SampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: SampleId) -> Option<&LabeledSample> {
        self.index_of(id).map(|i| &self.samples[i])
    }

    pub fn contains_id(&self, id: SampleId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.y).or_insert(0) += 1;
        }
        counts
    }

    pub fn filter<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&LabeledSample) -> bool,
    {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        self.subset_unchecked(samples)
    }

    pub fn restrict_to(&self, classes: &BTreeSet<Label>) -> Self {
        self.filter(|s| classes.contains(&s.y))
    }

    /// Concatenation `self ∪ other`; ids must not collide.
    pub fn union(&self, other: &Dataset) -> Result<Self> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if !other.is_empty() && other.dim != self.dim {
            return Err(HirfError::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Self::with_dim(self.dim, samples)
    }

    /// Copy of the dataset with every feature vector normalized by `stats`.
    pub fn normalized(&self, stats: &NormalizationStats) -> Result<Self> {
        if stats.dim() != self.dim {
            return Err(HirfError::DimensionMismatch {
                expected: stats.dim(),
                actual: self.dim,
            });
        }
        let samples = self
            .samples
            .iter()
            .map(|s| LabeledSample::new(s.id, stats.apply(&s.x), s.y))
            .collect();
        Ok(self.subset_unchecked(samples))
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a LabeledSample;
    type IntoIter = std::slice::Iter<'a, LabeledSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Per-feature mean and population standard deviation.
///
/// Features with zero spread are "constant"; they normalize to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.std[feature] == 0.0
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.is_constant(j)).collect()
    }

    /// Unchecked z-score transform; callers guarantee `x.len() == self.dim()`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let sd = self.std[j];
            *o = if sd == 0.0 {
                0.0
            } else {
                (x[j] - self.mean[j]) / sd
            };
        }
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Fits per-feature mean and population standard deviation over all samples.
pub fn fit_normalizer(data: &Dataset) -> Result<NormalizationStats> {
    if data.is_empty() {
        return Err(HirfError::EmptyDataset);
    }
    let n = data.len() as f64;
    let dim = data.dim();
    let mut mean = vec![0.0; dim];
    for s in data {
        for (m, v) in mean.iter_mut().zip(&s.x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    // Two-pass variance keeps constant features at exactly zero.
    let mut var = vec![0.0; dim];
    for s in data {
        for ((acc, v), m) in var.iter_mut().zip(&s.x).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(NormalizationStats { mean, std })
}

/// `(x - mean) / std` per feature, with constant features mapped to 0.
pub fn normalize(x: &[f64], stats: &NormalizationStats) -> Result<Vec<f64>> {
    if x.len() != stats.dim() {
        return Err(HirfError::DimensionMismatch {
            expected: stats.dim(),
            actual: x.len(),
        });
    }
    Ok(stats.apply(x))
}

/// A bootstrap replicate: `|D|` sample ids drawn with replacement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSet {
    pub tree_index: usize,
    pub sample_ids: Vec<SampleId>,
}

impl BootstrapSet {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn distinct(&self) -> HashSet<SampleId> {
        self.sample_ids.iter().copied().collect()
    }

    /// Positions in `data` of every drawn id, with multiplicity. Ids that are
    /// not in `data` are skipped.
    pub fn indices_in(&self, data: &Dataset) -> Vec<usize> {
        self.sample_ids
            .iter()
            .filter_map(|&id| data.index_of(id))
            .collect()
    }
}

pub fn bootstrap<R: Rng + ?Sized>(
    data: &Dataset,
    tree_index: usize,
    rng: &mut R,
) -> Result<BootstrapSet> {
    if data.is_empty() {
        return Err(HirfError::EmptyDataset);
    }
    let n = data.len();
    let sample_ids = (0..n)
        .map(|_| data.samples[rng.random_range(0..n)].id)
        .collect();
    Ok(BootstrapSet {
        tree_index,
        sample_ids,
    })
}

/// The out-of-bag set: samples of `data` whose id was never drawn into `boot`.
pub fn left_out(data: &Dataset, boot: &BootstrapSet) -> Dataset {
    let drawn = boot.distinct();
    data.filter(|s| !drawn.contains(&s.id))
}

/// Which classes are available up front and in which order the rest arrive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalSchedule {
    pub initial: BTreeSet<Label>,
    pub batches: Vec<BTreeSet<Label>>,
}

impl ArrivalSchedule {
    pub fn new(initial: BTreeSet<Label>, batches: Vec<BTreeSet<Label>>) -> Self {
        Self { initial, batches }
    }

    /// All classes offline, no arrivals.
    pub fn all_initial(classes: &BTreeSet<Label>) -> Self {
        Self::new(classes.clone(), Vec::new())
    }

    /// The first `initial_count` classes (in label order) start the forest and
    /// the remainder arrive `step` at a time; the last batch may be smaller.
    pub fn stepped(classes: &BTreeSet<Label>, initial_count: usize, step: usize) -> Result<Self> {
        if initial_count == 0 || initial_count > classes.len() {
            return Err(HirfError::InvalidSchedule(format!(
                "initial class count {initial_count} outside 1..={}",
                classes.len()
            )));
        }
        if step == 0 {
            return Err(HirfError::InvalidSchedule(
                "step size must be positive".into(),
            ));
        }
        let ordered: Vec<Label> = classes.iter().copied().collect();
        let initial = ordered[..initial_count].iter().copied().collect();
        let batches = ordered[initial_count..]
            .chunks(step)
            .map(|c| c.iter().copied().collect())
            .collect();
        Ok(Self::new(initial, batches))
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.initial.iter().chain(self.batches.iter().flatten())
    }

    /// Checks disjointness, non-empty parts, and exact coverage of `classes`.
    pub fn validate(&self, classes: &BTreeSet<Label>) -> Result<()> {
        if self.initial.is_empty() {
            return Err(HirfError::InvalidSchedule(
                "initial class set is empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for (part, labels) in std::iter::once(&self.initial)
            .chain(&self.batches)
            .enumerate()
        {
            if labels.is_empty() {
                return Err(HirfError::InvalidSchedule(format!("batch {part} is empty")));
            }
            for &l in labels {
                if !classes.contains(&l) {
                    return Err(HirfError::UnknownLabel(l));
                }
                if !seen.insert(l) {
                    return Err(HirfError::InvalidSchedule(format!(
                        "label {l} is scheduled more than once"
                    )));
                }
            }
        }
        if let Some(missing) = classes.difference(&seen).next() {
            return Err(HirfError::InvalidSchedule(format!(
                "label {missing} is never scheduled"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Partitions `data` into the initial dataset and one dataset per batch.
pub fn split_by_schedule(
    data: &Dataset,
    sched: &ArrivalSchedule,
) -> Result<(Dataset, Vec<Dataset>)> {
    sched.validate(data.classes())?;
    let initial = data.restrict_to(&sched.initial);
    let batches = sched.batches.iter().map(|b| data.restrict_to(b)).collect();
    Ok((initial, batches))
}

/// Stratified split: within each class, a seeded shuffle sends
/// `round(test_fraction * n_class)` samples to the test side.
pub fn stratified_split<R: Rng + ?Sized>(
    data: &Dataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(HirfError::InvalidConfig(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.iter().enumerate() {
        by_class.entry(s.y).or_default().push(i);
    }
    let mut test_idx = HashSet::new();
    for idx in by_class.values_mut() {
        idx.shuffle(rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        test_idx.extend(idx.iter().take(n_test).copied());
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in data.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((data.subset_unchecked(train), data.subset_unchecked(test)))
}

/// Reads a dataset from CSV: feature columns then an integer label in the
/// final column. A leading row that does not parse as numbers is treated as a
/// header. Sample ids are the zero-based data row numbers.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse_err = |reason: String| HirfError::Parse {
            path: path.to_path_buf(),
            line: line + 1,
            reason,
        };
        if record.len() < 2 {
            return Err(parse_err("need at least one feature and a label".into()));
        }
        let (label_field, feature_fields) = {
            let fields: Vec<&str> = record.iter().collect();
            let (last, rest) = fields.split_last().expect("non-empty record");
            (*last, rest.to_vec())
        };
        let features: std::result::Result<Vec<f64>, _> =
            feature_fields.iter().map(|f| f.parse::<f64>()).collect();
        let label = label_field.parse::<u32>();
        match (features, label) {
            (Ok(x), Ok(y)) => {
                samples.push(LabeledSample::new(samples.len() as SampleId, x, Label(y)))
            }
            _ if line == 0 => continue,
            (Err(e), _) => return Err(parse_err(format!("bad feature value: {e}"))),
            (_, Err(e)) => return Err(parse_err(format!("bad label {label_field:?}: {e}"))),
        }
    }
    Dataset::new(samples).map_err(|e| match e {
        HirfError::DimensionMismatch { expected, actual } => HirfError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("rows have {actual} features, expected {expected}"),
        },
        other => other,
    })
}

/// Writes `data` in the format [`read_csv`] accepts, with a header row.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("f_{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for s in data {
        let mut row: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
        row.push(s.y.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
