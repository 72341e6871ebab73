//! Experiment driver: synthetic data, schedule execution and result files.
//!
//! A run writes three files into its output directory:
//!
//! * `results.csv`: one [`BenchmarkRecord`] per round,
//! * `rounds.jsonl`: one [`RoundReport`] per line,
//! * `forest_final.json`: the final forest snapshot.
//!
//! A sweep writes `sweep.csv` with one [`SweepRow`] per initial class count.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{self, ArrivalSchedule, Dataset, Label, LabeledSample};
use crate::error::{HirfError, Result};
use crate::forest::{Forest, ForestConfig};
use crate::incremental::{self, RoundReport, ScheduleOptions};

/// Isotropic Gaussian blobs, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of every blob.
    pub std: f64,
    /// Minimum pairwise centroid distance, in multiples of `std`.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Well-separated preset: centroids at least 8 standard deviations apart.
    pub fn separated(classes: usize, per_class: usize, dim: usize, std: f64, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            dim,
            std,
            separation: 8.0,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(HirfError::InvalidConfig(format!(
                "synthetic data needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.dim == 0 || self.per_class == 0 {
            return Err(HirfError::InvalidConfig(
                "synthetic dimension and samples per class must be positive".into(),
            ));
        }
        if !(self.std.is_finite()
            && self.std >= 0.0
            && self.separation.is_finite()
            && self.separation >= 0.0)
        {
            return Err(HirfError::InvalidConfig(format!(
                "bad spread {} or separation {}",
                self.std, self.separation
            )));
        }
        Ok(())
    }
}

/// Parses `C,N,K,STD` into the separated preset with seed 0.
impl FromStr for SyntheticSpec {
    type Err = HirfError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || HirfError::InvalidConfig(format!("expected C,N,K,STD, got {s:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let classes = parts[0].parse().map_err(|_| bad())?;
        let per_class = parts[1].parse().map_err(|_| bad())?;
        let dim = parts[2].parse().map_err(|_| bad())?;
        let std = parts[3].parse().map_err(|_| bad())?;
        let spec = Self::separated(classes, per_class, dim, std, 0);
        spec.validate()?;
        Ok(spec)
    }
}

/// Samples class centroids in a growing hypercube until every pair is at
/// least `separation * std` apart (or 1 when the spread is zero), then draws
/// `per_class` points around each. Labels run from 1 to `classes`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let min_sep = (spec.separation * spec.std).max(1.0);
    let mut half_width = min_sep;
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut rejections = 0;
    while centroids.len() < spec.classes {
        let candidate: Vec<f64> = (0..spec.dim)
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        let far_enough = centroids.iter().all(|c| {
            let d2: f64 = c
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 >= min_sep * min_sep
        });
        if far_enough {
            centroids.push(candidate);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections == 200 {
                half_width *= 1.25;
                rejections = 0;
            }
        }
    }

    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    for (c, centroid) in centroids.iter().enumerate() {
        for _ in 0..spec.per_class {
            let x = centroid
                .iter()
                .map(|m| m + spec.std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let id = samples.len() as u64;
            samples.push(LabeledSample::new(id, x, Label(c as u32 + 1)));
        }
    }
    Dataset::new(samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv(path) => data::read_csv(path),
            DataSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    File(PathBuf),
    Explicit(ArrivalSchedule),
    /// First `initial` classes up front, then `step` at a time. `None`
    /// defaults to half the classes (rounded up) and a single batch.
    Stepped {
        initial: Option<usize>,
        step: Option<usize>,
    },
}

impl ScheduleSource {
    pub fn resolve(&self, data: &Dataset) -> Result<ArrivalSchedule> {
        let sched = match self {
            ScheduleSource::File(path) => ArrivalSchedule::load(path)?,
            ScheduleSource::Explicit(s) => s.clone(),
            ScheduleSource::Stepped { initial, step } => {
                let c = data.classes().len();
                let initial = initial.unwrap_or(c.div_ceil(2));
                let step = step.unwrap_or(c.saturating_sub(initial).max(1));
                ArrivalSchedule::stepped(data.classes(), initial, step)?
            }
        };
        sched.validate(data.classes())?;
        Ok(sched)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub schedule: ScheduleSource,
    pub forest: ForestConfig,
    pub seed: u64,
    pub test_fraction: f64,
    pub baseline: bool,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(data: DataSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            data,
            schedule: ScheduleSource::Stepped {
                initial: None,
                step: None,
            },
            forest: ForestConfig::default(),
            seed: 0,
            test_fraction: 0.2,
            baseline: true,
            out_dir: out_dir.into(),
        }
    }
}

/// Rounds to 9 significant digits, the precision results are written with.
pub fn sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub round: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub accuracy_hirf: f64,
    pub accuracy_offline: Option<f64>,
    pub train_time_hirf_ms: f64,
    pub train_time_offline_ms: Option<f64>,
    pub test_time_hirf_ms: f64,
    pub test_time_offline_ms: Option<f64>,
    pub n_retrained: usize,
    pub n_updated: usize,
    pub delta: f64,
}

/// Columns of `results.csv` that hold wall-clock measurements.
pub const WALL_CLOCK_COLUMNS: [&str; 4] = [
    "train_time_hirf_ms",
    "train_time_offline_ms",
    "test_time_hirf_ms",
    "test_time_offline_ms",
];

impl BenchmarkRecord {
    pub fn from_report(r: &RoundReport) -> Self {
        let b = r.baseline.as_ref();
        Self {
            round: r.round_index,
            n_classes: r.n_classes,
            n_train: r.n_train,
            accuracy_hirf: sig9(r.accuracy_after.unwrap_or(f64::NAN)),
            accuracy_offline: b.map(|b| sig9(b.accuracy)),
            train_time_hirf_ms: sig9(r.train_time_ms),
            train_time_offline_ms: b.map(|b| sig9(b.train_time_ms)),
            test_time_hirf_ms: sig9(r.test_time_ms.unwrap_or(f64::NAN)),
            test_time_offline_ms: b.map(|b| sig9(b.test_time_ms)),
            n_retrained: r.n_retrained,
            n_updated: r.n_updated,
            delta: sig9(r.delta),
        }
    }
}

pub fn write_records(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_rounds_jsonl(reports: &[RoundReport], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rounds_jsonl(path: &Path) -> Result<Vec<RoundReport>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Loads the data, holds out a stratified test split and runs the schedule.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<BenchmarkRecord>,
    pub reports: Vec<RoundReport>,
    pub forest: Forest,
}

pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let data = spec.data.load()?;
    let sched = spec.schedule.resolve(&data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (train, test) = data::stratified_split(&data, spec.test_fraction, &mut rng)?;
    let options = ScheduleOptions {
        baseline: spec.baseline,
    };
    let outcome =
        incremental::run_schedule(&train, &test, &sched, &spec.forest, options, &mut rng)?;
    let records = outcome
        .reports
        .iter()
        .map(BenchmarkRecord::from_report)
        .collect();
    Ok(ExperimentOutcome {
        records,
        reports: outcome.reports,
        forest: outcome.forest,
    })
}

/// [`execute`], then writes `results.csv`, `rounds.jsonl` and
/// `forest_final.json` under `spec.out_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let outcome = execute(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    write_records(&outcome.records, &spec.out_dir.join("results.csv"))?;
    write_rounds_jsonl(&outcome.reports, &spec.out_dir.join("rounds.jsonl"))?;
    outcome
        .forest
        .save(&spec.out_dir.join("forest_final.json"))?;
    Ok(outcome)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

/// Fixed-width table of the records.
pub fn summary_table(records: &[BenchmarkRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>7} {:>8} {:>8} {:>8} {:>11} {:>11} {:>4} {:>4} {:>7}",
        "round",
        "classes",
        "n_train",
        "acc_hirf",
        "acc_off",
        "t_hirf_ms",
        "t_off_ms",
        "n1",
        "n2",
        "delta"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{:>5} {:>7} {:>8} {:>8.4} {:>8} {:>11.1} {:>11} {:>4} {:>4} {:>7.4}",
            r.round,
            r.n_classes,
            r.n_train,
            r.accuracy_hirf,
            opt(r.accuracy_offline, 4),
            r.train_time_hirf_ms,
            opt(r.train_time_offline_ms, 1),
            r.n_retrained,
            r.n_updated,
            r.delta
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub data: DataSource,
    pub initial_counts: Vec<usize>,
    pub forest: ForestConfig,
    pub seed: u64,
    /// Runs per count; run `r` uses seed `seed + r`, for synthetic data too.
    pub repeats: usize,
    pub test_fraction: f64,
    pub out_dir: PathBuf,
}

/// One row of `sweep.csv`: the final round after absorbing every class not
/// in the initial set, averaged over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub initial_classes: usize,
    pub acc_hirf: f64,
    pub acc_offline: f64,
    pub t_hirf: f64,
    pub t_offline: f64,
    /// `acc_offline - acc_hirf`.
    pub acc_gap: f64,
    /// `t_hirf / t_offline`.
    pub time_ratio: f64,
    pub n_retrained: f64,
    pub n_updated: f64,
    pub repeats: usize,
}

/// Per-repeat outcomes behind a [`SweepRow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub initial_classes: usize,
    pub seed: u64,
    pub final_round: RoundReport,
}

pub fn execute_sweep(spec: &SweepSpec) -> Result<(Vec<SweepRow>, Vec<SweepRun>)> {
    if spec.repeats == 0 || spec.initial_counts.is_empty() {
        return Err(HirfError::InvalidConfig(
            "a sweep needs at least one count and one repeat".into(),
        ));
    }
    let mut runs = Vec::new();
    for &count in &spec.initial_counts {
        for r in 0..spec.repeats {
            let seed = spec.seed + r as u64;
            let data = match &spec.data {
                DataSource::Synthetic(s) => DataSource::Synthetic(s.clone().with_seed(seed)),
                other => other.clone(),
            };
            let exp = ExperimentSpec {
                data,
                schedule: ScheduleSource::Stepped {
                    initial: Some(count),
                    step: None,
                },
                forest: spec.forest.clone(),
                seed,
                test_fraction: spec.test_fraction,
                baseline: true,
                out_dir: spec.out_dir.clone(),
            };
            let outcome = execute(&exp)?;
            let final_round = outcome.reports.last().cloned().expect("at least one round");
            runs.push(SweepRun {
                initial_classes: count,
                seed,
                final_round,
            });
        }
    }
    let rows = spec
        .initial_counts
        .iter()
        .map(|&count| {
            let group: Vec<&RoundReport> = runs
                .iter()
                .filter(|r| r.initial_classes == count)
                .map(|r| &r.final_round)
                .collect();
            let mean = |f: &dyn Fn(&RoundReport) -> f64| {
                group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64
            };
            let base = |r: &RoundReport| r.baseline.clone().expect("sweeps run baselines");
            let acc_hirf = mean(&|r| r.accuracy_after.unwrap_or(f64::NAN));
            let acc_offline = mean(&|r| base(r).accuracy);
            let t_hirf = mean(&|r| r.train_time_ms);
            let t_offline = mean(&|r| base(r).train_time_ms);
            SweepRow {
                initial_classes: count,
                acc_hirf: sig9(acc_hirf),
                acc_offline: sig9(acc_offline),
                t_hirf: sig9(t_hirf),
                t_offline: sig9(t_offline),
                acc_gap: sig9(acc_offline - acc_hirf),
                time_ratio: sig9(t_hirf / t_offline),
                n_retrained: sig9(mean(&|r| r.n_retrained as f64)),
                n_updated: sig9(mean(&|r| r.n_updated as f64)),
                repeats: group.len(),
            }
        })
        .collect();
    Ok((rows, runs))
}

/// [`execute_sweep`], then writes `sweep.csv` and `sweep_runs.jsonl`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let (rows, runs) = execute_sweep(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let mut w = csv::Writer::from_path(spec.out_dir.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut jl = BufWriter::new(File::create(spec.out_dir.join("sweep_runs.jsonl"))?);
    for r in &runs {
        serde_json::to_writer(&mut jl, r)?;
        jl.write_all(b"\n")?;
    }
    jl.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_zero_spread_sits_on_centroids() {
        let spec = SyntheticSpec::separated(2, 1, 3, 0.0, 5);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.len(), 2);
        let again = generate_synthetic(&spec).unwrap();
        assert_eq!(d, again);
        let gap: f64 = d.samples()[0]
            .x
            .iter()
            .zip(&d.samples()[1].x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(gap >= 1.0);
        // with three samples per class, zero spread gives identical rows
        let d = generate_synthetic(&SyntheticSpec::separated(2, 3, 3, 0.0, 5)).unwrap();
        assert_eq!(d.samples()[0].x, d.samples()[2].x);
    }

    #[test]
    fn synthetic_spec_parsing() {
        let s: SyntheticSpec = "10,300,16,1.0".parse().unwrap();
        assert_eq!((s.classes, s.per_class, s.dim, s.std), (10, 300, 16, 1.0));
        assert!("1,300,16,1.0".parse::<SyntheticSpec>().is_err());
        assert!("10,300,16".parse::<SyntheticSpec>().is_err());
        assert!("a,b,c,d".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn sig9_keeps_nine_digits() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(1234.56789012), 1234.56789);
        assert_eq!(sig9(0.0), 0.0);
    }

    #[test]
    fn stepped_defaults() {
        let d = generate_synthetic(&SyntheticSpec::separated(5, 2, 2, 1.0, 0)).unwrap();
        let s = ScheduleSource::Stepped {
            initial: None,
            step: None,
        }
        .resolve(&d)
        .unwrap();
        assert_eq!(s.initial.len(), 3);
        assert_eq!(s.batches.len(), 1);
        assert_eq!(s.batches[0].len(), 2);
    }
}
