//! The incremental round: out-of-bag threshold estimation, the split of the
//! forest into retrained and leaf-refreshed trees, and out-of-bag boosting.
//!
//! A round on old data `D_o` and a new batch `D_n` runs:
//!
//! 1. `D = D_o ∪ D_n`; fit a fresh normalization frame on `D`.
//! 2. Re-measure every tree's error on `D` minus its stored replicate, plus
//!    whatever boost the tree has accumulated.
//! 3. Fit a Gaussian to those errors by maximum likelihood; the threshold is
//!    its mean. Trees strictly above it are retrained, the rest updated.
//! 4. Retrained trees are grown from scratch on a fresh bootstrap of `D` in
//!    the new frame. Updated trees keep every split and only refresh their
//!    leaves from a fresh bootstrap of `D`, in their own frame.
//! 5. Re-measure every tree's error on its new left-out set.
//! 6. Boost the errors of updated trees so they are likelier to be retrained
//!    in a later round.
//!
//! Stored replicates of old trees only cover old data, so new-class samples
//! all land in their left-out sets and raise their errors; that is what makes
//! the arrival of new classes trigger retraining.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, ArrivalSchedule, Dataset};
use crate::error::{HirfError, Result};
use crate::forest::{
    self, grow_member_tree, measure_oob, millis, par_map, tree_rngs, Forest, ForestConfig, FrameId,
    Member,
};

/// Gaussian fit of the forest's out-of-bag errors and the derived threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OobState {
    pub errors: Vec<f64>,
    pub mu: f64,
    /// Maximum-likelihood (population) variance.
    pub sigma2: f64,
    pub delta: f64,
}

/// Closed-form Gaussian MLE of `errors`; the threshold is the fitted mean.
pub fn oob_estimation(errors: &[f64]) -> Result<OobState> {
    if errors.is_empty() {
        return Err(HirfError::InvalidConfig(
            "threshold estimation needs at least one error".into(),
        ));
    }
    let n = errors.len() as f64;
    // shifting by the first value keeps identical inputs exact
    let o0 = errors[0];
    let mu = o0 + errors.iter().map(|o| o - o0).sum::<f64>() / n;
    let sigma2 = errors.iter().map(|o| (o - mu) * (o - mu)).sum::<f64>() / n;
    Ok(OobState {
        errors: errors.to_vec(),
        mu,
        sigma2,
        delta: mu,
    })
}

impl OobState {
    /// Log-likelihood of the errors under the fitted Gaussian. Infinite when
    /// the fit is degenerate (`sigma2 == 0`).
    pub fn log_likelihood(&self) -> f64 {
        log_likelihood(&self.errors, self.mu, self.sigma2)
    }
}

/// `Σ ln N(o_i; mu, sigma2)`.
pub fn log_likelihood(errors: &[f64], mu: f64, sigma2: f64) -> f64 {
    let n = errors.len() as f64;
    let ss: f64 = errors.iter().map(|o| (o - mu) * (o - mu)).sum();
    -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - ss / (2.0 * sigma2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeDecision {
    /// Error above the threshold: discard and grow a new tree.
    Retrain,
    /// Error at or below the threshold: keep the splits, refresh the leaves.
    Update,
}

/// `o_i > delta` retrains, `o_i <= delta` updates.
pub fn classify_trees(state: &OobState, errors: &[f64]) -> Vec<TreeDecision> {
    errors
        .iter()
        .map(|&o| {
            if o > state.delta {
                TreeDecision::Retrain
            } else {
                TreeDecision::Update
            }
        })
        .collect()
}

/// `o + alpha * tanh(o)`.
pub fn boost(o: f64, alpha: f64) -> f64 {
    o + alpha * o.tanh()
}

/// Boosts the errors of trees decided [`TreeDecision::Update`]; the rest are
/// returned unchanged.
pub fn oob_boosting(errors: &[f64], decisions: &[TreeDecision], alpha: f64) -> Vec<f64> {
    errors
        .iter()
        .zip(decisions)
        .map(|(&o, d)| match d {
            TreeDecision::Update => boost(o, alpha),
            TreeDecision::Retrain => o,
        })
        .collect()
}

/// What happened to one tree during a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeRound {
    pub tree: usize,
    pub decision: TreeDecision,
    /// Error fed into the threshold estimate.
    pub oob_in: f64,
    /// Raw error on the new left-out set after the round.
    pub raw_oob_out: f64,
    /// Stored error after boosting.
    pub oob_out: f64,
    pub oob_empty: bool,
    pub structure_before: String,
    pub structure_after: String,
    pub time_ms: f64,
}

/// Comparison numbers for a forest retrained offline on the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub accuracy: f64,
    pub train_time_ms: f64,
    /// Mean per-tree grow time of the offline forest.
    pub mean_grow_time_ms: f64,
    pub test_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round_index: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_retrained: usize,
    pub n_updated: usize,
    pub mu: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub trees: Vec<TreeRound>,
    pub accuracy_after: Option<f64>,
    /// Normalizer fit plus retraining and leaf refresh.
    pub train_time_ms: f64,
    pub retrain_time_ms: f64,
    pub update_time_ms: f64,
    /// Mean grow time of the trees retrained this round.
    pub mean_grow_time_ms: Option<f64>,
    /// Out-of-bag measurement before and after the update.
    pub oob_time_ms: f64,
    pub test_time_ms: Option<f64>,
    pub baseline: Option<BaselineReport>,
}

impl RoundReport {
    pub fn decisions(&self) -> Vec<TreeDecision> {
        self.trees.iter().map(|t| t.decision).collect()
    }

    /// Copy with every wall-clock field zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.train_time_ms = 0.0;
        r.retrain_time_ms = 0.0;
        r.update_time_ms = 0.0;
        r.mean_grow_time_ms = r.mean_grow_time_ms.map(|_| 0.0);
        r.oob_time_ms = 0.0;
        r.test_time_ms = r.test_time_ms.map(|_| 0.0);
        r.trees.iter_mut().for_each(|t| t.time_ms = 0.0);
        if let Some(b) = r.baseline.as_mut() {
            b.train_time_ms = 0.0;
            b.mean_grow_time_ms = 0.0;
            b.test_time_ms = 0.0;
        }
        r
    }
}

/// Absorbs `new_data` into `forest`, which was last trained or updated on
/// `old_data`. Returns the updated forest and the round report (without
/// test accuracy or baseline, which need held-out data).
pub fn absorb_batch<R: Rng + ?Sized>(
    forest: &Forest,
    old_data: &Dataset,
    new_data: &Dataset,
    rng: &mut R,
) -> Result<(Forest, RoundReport)> {
    if new_data.is_empty() {
        return Err(HirfError::EmptyDataset);
    }
    let config = forest.config().clone();
    let s = forest.len();
    let rngs = tree_rngs(rng, s);

    // (1) merged data and this round's frame
    let start = Instant::now();
    let all = old_data.union(new_data)?;
    if all.dim() != forest.dim() {
        return Err(HirfError::DimensionMismatch {
            expected: forest.dim(),
            actual: all.dim(),
        });
    }
    let stats = data::fit_normalizer(&all)?;
    let normalized = all.normalized(&stats)?;
    let frame_setup_ms = millis(start);

    // (2) errors of the current trees against the merged data
    let start = Instant::now();
    let mut views = forest.frame_views(&all)?;
    let members = forest.members();
    let measured = par_map(config.threads, s, |i| {
        let m = &members[i];
        Ok(measure_oob(&m.tree, &m.boot, &views[&m.frame]))
    })?;
    let inputs: Vec<f64> = measured
        .iter()
        .zip(members)
        .map(|(meas, m)| meas.error + m.lift())
        .collect();

    // (3) threshold and decisions
    let state = oob_estimation(&inputs)?;
    let decisions = classify_trees(&state, &inputs);
    let mut oob_ms = millis(start);

    // (4) retrain or refresh
    let new_frame: FrameId = forest.frames().keys().next_back().map_or(0, |f| f + 1);
    views.insert(new_frame, normalized.clone());
    let start = Instant::now();
    let rebuilt = par_map(config.threads, s, |i| {
        let mut r = rngs[i].clone();
        let m = &members[i];
        match decisions[i] {
            TreeDecision::Retrain => {
                let (tree, boot, ms) =
                    grow_member_tree(&all, &normalized, i, &config.tree, &mut r)?;
                Ok((tree, boot, new_frame, ms))
            }
            TreeDecision::Update => {
                let t0 = Instant::now();
                let boot = data::bootstrap(&all, i, &mut r)?;
                let view = &views[&m.frame];
                let tree = m.tree.refresh_leaves_on(view, &boot.indices_in(view));
                Ok((tree, boot, m.frame, millis(t0)))
            }
        }
    })?;
    let train_time_ms = frame_setup_ms + millis(start);

    // (5) fresh errors, (6) boosting of updated trees
    let start = Instant::now();
    let after = par_map(config.threads, s, |i| {
        let (tree, boot, frame, _) = &rebuilt[i];
        Ok(measure_oob(tree, boot, &views[frame]))
    })?;
    oob_ms += millis(start);

    let mut trees = Vec::with_capacity(s);
    let mut new_members = Vec::with_capacity(s);
    let (mut retrain_ms, mut update_ms) = (0.0, 0.0);
    for (i, ((tree, boot, frame, ms), meas)) in rebuilt.into_iter().zip(after).enumerate() {
        let old = &members[i];
        let oob = match decisions[i] {
            TreeDecision::Retrain => {
                retrain_ms += ms;
                meas.error
            }
            TreeDecision::Update => {
                update_ms += ms;
                boost(meas.error + old.lift(), config.alpha)
            }
        };
        trees.push(TreeRound {
            tree: i,
            decision: decisions[i],
            oob_in: inputs[i],
            raw_oob_out: meas.error,
            oob_out: oob,
            oob_empty: meas.empty,
            structure_before: old.tree.structure_digest(),
            structure_after: tree.structure_digest(),
            time_ms: ms,
        });
        new_members.push(Member {
            tree,
            boot,
            oob,
            raw_oob: meas.error,
            oob_empty: meas.empty,
            frame,
        });
    }

    let mut frames: BTreeMap<FrameId, _> = forest.frames().clone();
    frames.insert(new_frame, stats);
    let used: BTreeSet<FrameId> = new_members.iter().map(|m| m.frame).collect();
    frames.retain(|id, _| used.contains(id));

    let n_retrained = decisions
        .iter()
        .filter(|d| **d == TreeDecision::Retrain)
        .count();
    let report = RoundReport {
        round_index: 0,
        n_classes: all.classes().len(),
        n_train: all.len(),
        n_retrained,
        n_updated: s - n_retrained,
        mu: state.mu,
        sigma2: state.sigma2,
        delta: state.delta,
        trees,
        accuracy_after: None,
        train_time_ms,
        retrain_time_ms: retrain_ms,
        update_time_ms: update_ms,
        mean_grow_time_ms: (n_retrained > 0).then(|| retrain_ms / n_retrained as f64),
        oob_time_ms: oob_ms,
        test_time_ms: None,
        baseline: None,
    };
    let forest = Forest::from_members(config, frames, new_members)?;
    Ok((forest, report))
}

/// Options for [`run_schedule`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleOptions {
    /// Also retrain an offline forest on the cumulative data every round.
    pub baseline: bool,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self { baseline: true }
    }
}

#[derive(Clone, Debug)]
pub struct ScheduleOutcome {
    pub reports: Vec<RoundReport>,
    pub forest: Forest,
}

fn timed_accuracy(forest: &Forest, test: &Dataset) -> Result<(f64, f64)> {
    let start = Instant::now();
    let acc = forest.accuracy(test)?;
    Ok((acc, millis(start)))
}

/// Trains on the initial classes, then absorbs each scheduled batch in turn.
/// After every round the forest is scored on the part of `test` whose
/// classes have arrived so far, next to an offline forest retrained on the
/// same cumulative data when `options.baseline` is set.
pub fn run_schedule<R: Rng + ?Sized>(
    train: &Dataset,
    test: &Dataset,
    sched: &ArrivalSchedule,
    config: &ForestConfig,
    options: ScheduleOptions,
    rng: &mut R,
) -> Result<ScheduleOutcome> {
    config.validate()?;
    let (initial, batches) = data::split_by_schedule(train, sched)?;
    // Baseline forests draw from their own stream so toggling them leaves the
    // incremental run unchanged.
    let mut baseline_rng = ChaCha8Rng::seed_from_u64(rng.random());

    let (mut forest, timing) = forest::train_offline_timed(&initial, config, rng)?;
    let mut seen = initial.clone();
    let scoped_test = |seen: &Dataset| test.restrict_to(seen.classes());

    let state = oob_estimation(&forest.oob_errors())?;
    let (acc, test_ms) = timed_accuracy(&forest, &scoped_test(&seen))?;
    let digests = forest.structure_digests();
    let first = RoundReport {
        round_index: 0,
        n_classes: seen.classes().len(),
        n_train: seen.len(),
        n_retrained: forest.len(),
        n_updated: 0,
        mu: state.mu,
        sigma2: state.sigma2,
        delta: state.delta,
        trees: forest
            .members()
            .iter()
            .enumerate()
            .map(|(i, m)| TreeRound {
                tree: i,
                decision: TreeDecision::Retrain,
                oob_in: m.oob,
                raw_oob_out: m.raw_oob,
                oob_out: m.oob,
                oob_empty: m.oob_empty,
                structure_before: String::new(),
                structure_after: digests[i].clone(),
                time_ms: timing.grow_ms[i],
            })
            .collect(),
        accuracy_after: Some(acc),
        train_time_ms: timing.train_ms,
        retrain_time_ms: timing.grow_ms.iter().sum(),
        update_time_ms: 0.0,
        mean_grow_time_ms: Some(timing.grow_ms.iter().sum::<f64>() / forest.len() as f64),
        oob_time_ms: timing.oob_ms,
        test_time_ms: Some(test_ms),
        // the initial forest is itself the offline forest
        baseline: options.baseline.then_some(BaselineReport {
            accuracy: acc,
            train_time_ms: timing.train_ms,
            mean_grow_time_ms: timing.grow_ms.iter().sum::<f64>() / forest.len() as f64,
            test_time_ms: test_ms,
        }),
    };
    let mut reports = vec![first];

    for (round, batch) in batches.iter().enumerate() {
        let (next, mut report) = absorb_batch(&forest, &seen, batch, rng)?;
        seen = seen.union(batch)?;
        let round_test = scoped_test(&seen);
        let (acc, test_ms) = timed_accuracy(&next, &round_test)?;
        report.round_index = round + 1;
        report.accuracy_after = Some(acc);
        report.test_time_ms = Some(test_ms);
        if options.baseline {
            let (offline, t) = forest::train_offline_timed(&seen, config, &mut baseline_rng)?;
            let (acc, test_ms) = timed_accuracy(&offline, &round_test)?;
            report.baseline = Some(BaselineReport {
                accuracy: acc,
                train_time_ms: t.train_ms,
                mean_grow_time_ms: t.grow_ms.iter().sum::<f64>() / t.grow_ms.len() as f64,
                test_time_ms: test_ms,
            });
        }
        reports.push(report);
        forest = next;
    }
    Ok(ScheduleOutcome { reports, forest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimation_three_errors() {
        let s = oob_estimation(&[0.1, 0.2, 0.3]).unwrap();
        // squared deviations 0.01 + 0 + 0.01 over 3
        assert!((s.mu - 0.2).abs() < 1e-15);
        assert!((s.sigma2 - 1.0 / 150.0).abs() < 1e-15);
        assert_eq!(s.delta, s.mu);
    }

    #[test]
    fn estimation_degenerate() {
        let s = oob_estimation(&[0.35; 6]).unwrap();
        assert!((s.delta - 0.35).abs() < 1e-15);
        assert_eq!(s.sigma2, 0.0);
        let s = oob_estimation(&[0.4]).unwrap();
        assert_eq!(s.delta, 0.4);
        assert!(oob_estimation(&[]).is_err());
    }

    #[test]
    fn mle_maximizes_likelihood() {
        let errors = [0.12, 0.3, 0.07, 0.22, 0.18];
        let s = oob_estimation(&errors).unwrap();
        let best = s.log_likelihood();
        for dm in [-0.01, 0.01] {
            assert!(log_likelihood(&errors, s.mu + dm, s.sigma2) < best);
        }
        for f in [0.9, 1.1] {
            assert!(log_likelihood(&errors, s.mu, s.sigma2 * f) < best);
        }
    }

    #[test]
    fn classify_examples() {
        let s = oob_estimation(&[0.1, 0.3]).unwrap();
        assert_eq!(
            classify_trees(&s, &s.errors),
            vec![TreeDecision::Update, TreeDecision::Retrain]
        );
        let s = oob_estimation(&[0.2; 4]).unwrap();
        assert!(classify_trees(&s, &s.errors)
            .iter()
            .all(|d| *d == TreeDecision::Update));
    }

    #[test]
    fn boosting_examples() {
        assert_eq!(boost(0.0, 0.7), 0.0);
        assert!((boost(0.5, 0.1) - 0.546_211_715_726_000_9).abs() < 1e-12);
        let errors = [0.2, 0.4];
        let d = [TreeDecision::Retrain, TreeDecision::Update];
        assert_eq!(oob_boosting(&errors, &d, 0.0), errors.to_vec());
        let b = oob_boosting(&errors, &d, 0.1);
        assert_eq!(b[0], 0.2);
        assert!(b[1] > 0.4);
    }

    #[test]
    fn absorb_rejects_empty_batch() {
        use crate::data::{Label, LabeledSample};
        let old = Dataset::new(vec![
            LabeledSample::new(0, vec![0.0], Label(1)),
            LabeledSample::new(1, vec![1.0], Label(2)),
        ])
        .unwrap();
        let config = ForestConfig {
            n_trees: 2,
            ..ForestConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = forest::train_offline(&old, &config, &mut rng).unwrap();
        assert!(matches!(
            absorb_batch(&f, &old, &Dataset::default(), &mut rng),
            Err(HirfError::EmptyDataset)
        ));
    }
}
