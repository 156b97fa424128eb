//! Clustering evaluation: purity, Rand index, empirical-intensity deviation
//! and clustering consistency.
//!
//! Purity and Rand index compare a predicted partition against true labels.
//! Empirical-intensity deviation (EID) compares two sequence sets through
//! their binned intensity estimates, accumulating the absolute per-bin gap
//! over the horizon. Clustering consistency needs no labels: it reruns a
//! clustering method over random train/test splits and measures how well
//! same-cluster pairs survive across trials.

use rayon::prelude::*;
use thiserror::Error;

use crate::policy::{Policy, PolicyError};
use crate::seeding::{mix_seed, rng_from};
use crate::sim::{empirical_intensity, Dataset, EventSequence, SimError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("true labels are required for this metric")]
    MissingLabels,
    #[error("need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("predicted and true label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sequence sets must be nonempty")]
    EmptySet,
    #[error("{0} true classes but {1} policies")]
    ClassPolicyMismatch(usize, usize),
    #[error("consistency needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("split fraction must lie in (0,1), got {0}")]
    BadSplitFraction(f64),
    #[error("no trial produced a comparable pair set")]
    NoComparablePairs,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] crate::sim::DataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// A predicted partition with optional ground truth.
#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub predicted: Vec<usize>,
    pub truth: Option<Vec<usize>>,
}

impl ClusteringResult {
    pub fn new(predicted: Vec<usize>, truth: Option<Vec<usize>>) -> Result<Self, MetricsError> {
        if let Some(t) = &truth {
            if t.len() != predicted.len() {
                return Err(MetricsError::LengthMismatch(predicted.len(), t.len()));
            }
        }
        Ok(Self { predicted, truth })
    }

    fn truth(&self) -> Result<&[usize], MetricsError> {
        self.truth.as_deref().ok_or(MetricsError::MissingLabels)
    }
}

fn contingency(predicted: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
    let k_pred = predicted.iter().copied().max().map_or(0, |m| m + 1);
    let k_true = truth.iter().copied().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; k_true]; k_pred];
    for (&p, &t) in predicted.iter().zip(truth) {
        table[p][t] += 1;
    }
    table
}

/// Fraction of sequences covered by their cluster's majority class:
/// `(1/M) Σ_k max_i |W_k ∩ C_i|`.
pub fn purity(result: &ClusteringResult) -> Result<f64, MetricsError> {
    let truth = result.truth()?;
    if result.predicted.is_empty() {
        return Err(MetricsError::TooFewItems(0));
    }
    let table = contingency(&result.predicted, truth);
    let majority: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / result.predicted.len() as f64)
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Pairwise agreement `(n11 + n00) / (M choose 2)`: pairs co-clustered with
/// equal labels plus pairs separated with unequal labels.
pub fn rand_index(result: &ClusteringResult) -> Result<f64, MetricsError> {
    let truth = result.truth()?;
    let m = result.predicted.len();
    if m < 2 {
        return Err(MetricsError::TooFewItems(m));
    }
    let table = contingency(&result.predicted, truth);
    let n11: usize = table.iter().flatten().map(|&n| choose2(n)).sum();
    let same_pred: usize = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let mut class_sizes = vec![0usize; table.first().map_or(0, Vec::len)];
    for row in &table {
        for (i, &n) in row.iter().enumerate() {
            class_sizes[i] += n;
        }
    }
    let same_true: usize = class_sizes.iter().map(|&n| choose2(n)).sum();
    let total = choose2(m);
    // n00 by inclusion-exclusion over the "same pred" / "same true" pair
    // sets; add n11 first so every intermediate stays nonnegative.
    let n00 = total + n11 - same_pred - same_true;
    Ok((n11 + n00) as f64 / total as f64)
}

/// Accumulated absolute gap between the empirical intensities of two
/// sequence sets: `Σ_bins |λ'_a - λ'_b| · width`.
pub fn eid(
    real: &[EventSequence],
    generated: &[EventSequence],
    bin_width: f64,
) -> Result<f64, MetricsError> {
    if real.is_empty() || generated.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let a = empirical_intensity(real, bin_width)?;
    let b = empirical_intensity(generated, bin_width)?;
    if a.rates.len() != b.rates.len() {
        return Err(MetricsError::Sim(SimError::Data(crate::sim::DataError::MixedHorizons(
            real[0].t_max(),
            generated[0].t_max(),
        ))));
    }
    let t_max = real[0].t_max();
    let mut total = 0.0;
    for (i, (ra, rb)) in a.rates.iter().zip(&b.rates).enumerate() {
        let start = i as f64 * bin_width;
        let width = (start + bin_width).min(t_max) - start;
        total += (ra - rb).abs() * width;
    }
    Ok(total)
}

/// Greedy best-match between true classes and policies by EID, smallest
/// entries first; returns the per-class EID under the matching.
///
/// Policies are sampled `n_sims` times each on the dataset horizon with
/// seeds derived from `seed`.
pub fn matched_eid(
    policies: &[Policy],
    dataset: &Dataset,
    bin_width: f64,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<f64>, MetricsError> {
    let labels = dataset.labels().ok_or(MetricsError::MissingLabels)?;
    let t_max = dataset.horizon()?;
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if n_classes != policies.len() {
        return Err(MetricsError::ClassPolicyMismatch(n_classes, policies.len()));
    }

    let mut class_sets: Vec<Vec<EventSequence>> = vec![Vec::new(); n_classes];
    for (e, &l) in dataset.entries.iter().zip(&labels) {
        class_sets[l].push(e.seq.clone());
    }

    let mut policy_sets: Vec<Vec<EventSequence>> = Vec::with_capacity(policies.len());
    for (j, policy) in policies.iter().enumerate() {
        let mut rollouts = Vec::with_capacity(n_sims);
        let mut rng = rng_from(mix_seed(seed, 0xE1D + j as u64));
        for _ in 0..n_sims {
            rollouts.push(policy.rollout(t_max, &mut rng)?.sequence);
        }
        policy_sets.push(rollouts);
    }

    let mut cost = vec![vec![0.0; policies.len()]; n_classes];
    for (i, reals) in class_sets.iter().enumerate() {
        for (j, gens) in policy_sets.iter().enumerate() {
            cost[i][j] = eid(reals, gens, bin_width)?;
        }
    }

    let mut class_taken = vec![false; n_classes];
    let mut policy_taken = vec![false; policies.len()];
    let mut out = vec![0.0; n_classes];
    for _ in 0..n_classes {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in cost.iter().enumerate() {
            if class_taken[i] {
                continue;
            }
            for (j, &c) in row.iter().enumerate() {
                if policy_taken[j] {
                    continue;
                }
                if best.map_or(true, |(_, _, b)| c < b) {
                    best = Some((i, j, c));
                }
            }
        }
        let (i, j, c) = best.expect("square cost matrix always has an unmatched pair");
        class_taken[i] = true;
        policy_taken[j] = true;
        out[i] = c;
    }
    Ok(out)
}

/// A clustering method that consistency trials can rerun: train on one fold,
/// label the other.
pub trait ClusterRunner: Sync {
    fn run(&self, train: &[&EventSequence], test: &[&EventSequence], seed: u64) -> Vec<usize>;
}

impl<F> ClusterRunner for F
where
    F: Fn(&[&EventSequence], &[&EventSequence], u64) -> Vec<usize> + Sync,
{
    fn run(&self, train: &[&EventSequence], test: &[&EventSequence], seed: u64) -> Vec<usize> {
        self(train, test, seed)
    }
}

const CC_TAG: u64 = 0xCC;

/// Minimum over trials of the cross-trial pair-preservation rate.
///
/// Each trial splits the dataset, trains on one fold and labels its test
/// fold. Same-cluster pairs from trial `j` are checked in every other trial
/// over the sequences present in both test folds; a trial whose comparable
/// pair set is empty everywhere is skipped with a warning.
pub fn clustering_consistency<R: ClusterRunner>(
    runner: &R,
    dataset: &Dataset,
    trials: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<f64, MetricsError> {
    if trials < 2 {
        return Err(MetricsError::TooFewTrials(trials));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(MetricsError::BadSplitFraction(split_fraction));
    }
    if dataset.is_empty() {
        return Err(MetricsError::EmptySet);
    }

    // Canonical item order: stable record ids.
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by_key(|&i| dataset.entries[i].id);

    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..trials)
        .map(|j| {
            let mut idx = order.clone();
            let mut rng = rng_from(mix_seed(seed, CC_TAG ^ (j as u64) << 8));
            for i in (1..idx.len()).rev() {
                let k = rand::Rng::gen_range(&mut rng, 0..=i);
                idx.swap(i, k);
            }
            let n_train = ((idx.len() as f64) * split_fraction).round() as usize;
            let n_train = n_train.clamp(1, idx.len() - 1);
            let (train, test) = idx.split_at(n_train);
            (train.to_vec(), test.to_vec())
        })
        .collect();

    let assignments: Vec<Vec<(usize, usize)>> = folds
        .par_iter()
        .enumerate()
        .map(|(j, (train, test))| {
            let train_refs: Vec<&EventSequence> =
                train.iter().map(|&i| &dataset.entries[i].seq).collect();
            let test_refs: Vec<&EventSequence> =
                test.iter().map(|&i| &dataset.entries[i].seq).collect();
            let labels = runner.run(&train_refs, &test_refs, mix_seed(seed, CC_TAG + 1 + j as u64));
            assert_eq!(labels.len(), test.len(), "runner must label every test sequence");
            test.iter().copied().zip(labels).collect()
        })
        .collect();

    consistency_from_assignments(&assignments, dataset.len())
}

/// Consistency from explicit per-trial `(item, cluster)` assignments over
/// each trial's test fold. Exposed for deterministic-fold tests.
pub fn consistency_from_assignments(
    assignments: &[Vec<(usize, usize)>],
    n_items: usize,
) -> Result<f64, MetricsError> {
    let trials = assignments.len();
    if trials < 2 {
        return Err(MetricsError::TooFewTrials(trials));
    }
    let lookup: Vec<Vec<Option<usize>>> = assignments
        .iter()
        .map(|a| {
            let mut v = vec![None; n_items];
            for &(item, cluster) in a {
                v[item] = Some(cluster);
            }
            v
        })
        .collect();

    let mut per_trial = Vec::with_capacity(trials);
    for (j, assigned) in assignments.iter().enumerate() {
        // Same-cluster pairs in trial j's test fold.
        let mut pairs = Vec::new();
        for (x, &(m, km)) in assigned.iter().enumerate() {
            for &(m2, km2) in &assigned[x + 1..] {
                if km == km2 {
                    pairs.push((m, m2));
                }
            }
        }
        if pairs.is_empty() {
            log::warn!("consistency trial {j} has no same-cluster pairs; skipped");
            continue;
        }
        let mut fractions = Vec::new();
        for (j2, other) in lookup.iter().enumerate() {
            if j2 == j {
                continue;
            }
            let mut preserved = 0usize;
            let mut comparable = 0usize;
            for &(m, m2) in &pairs {
                if let (Some(a), Some(b)) = (other[m], other[m2]) {
                    comparable += 1;
                    if a == b {
                        preserved += 1;
                    }
                }
            }
            if comparable > 0 {
                fractions.push(preserved as f64 / comparable as f64);
            }
        }
        if fractions.is_empty() {
            log::warn!("consistency trial {j} shares no pairs with any other trial; skipped");
            continue;
        }
        per_trial.push(fractions.iter().sum::<f64>() / fractions.len() as f64);
    }
    per_trial
        .into_iter()
        .min_by(f64::total_cmp)
        .ok_or(MetricsError::NoComparablePairs)
}
