//! Ground-truth event-sequence generation and empirical intensity
//! estimation.
//!
//! Sequences are drawn by Ogata thinning: candidate points come from a
//! homogeneous process at an upper bound of the conditional intensity and
//! are kept with probability `λ(t)/bound`. For the self-exciting kind the
//! bound is the intensity just after the latest event, which dominates until
//! the next event because the intensity only decays in between; it is
//! refreshed after every candidate. The inhomogeneous kinds use their
//! closed-form suprema.

pub mod dataset;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{DataError, Dataset, DatasetEntry, EventSequence};

use crate::seeding::{mix_seed, rng_from, sequence_seed};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("intensity evaluated at negative time {0}")]
    NegativeTime(f64),
    #[error("history must be sorted and strictly before t")]
    BadHistory,
    #[error("invalid intensity parameters: {0}")]
    BadSpec(String),
    #[error("no sequences given")]
    NoSequences,
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Conditional-intensity specification for the supported generators.
///
/// The inhomogeneous kinds follow fixed formulas on `t ∈ (0, T)`:
/// sine `sin(πt/50)/10 + 0.1`, negative sine `-sin(πt/50)/10 + 0.1`,
/// constant `0.1`, and a bimodal profile `0.15 exp(-(t - c)^2 / (2 (T/8)^2))`
/// with bumps centered at `c = T/4` and `c = 3T/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntensitySpec {
    /// Self-exciting: `λ(t) = base + excitation · Σ exp(-decay (t - t'))`.
    Hawkes { base: f64, excitation: f64, decay: f64 },
    Sine,
    NegativeSine,
    Constant,
    Bimodal { t_max: f64 },
}

impl IntensitySpec {
    /// Validates parameter ranges. A self-exciting spec with
    /// `excitation/decay >= 1` is unstable; it is allowed but logged.
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            IntensitySpec::Hawkes { base, excitation, decay } => {
                if base < 0.0 || excitation < 0.0 || !(decay > 0.0) {
                    return Err(SimError::BadSpec(format!(
                        "self-exciting parameters must satisfy base >= 0, excitation >= 0, decay > 0 \
                         (got {base}, {excitation}, {decay})"
                    )));
                }
                if excitation / decay >= 1.0 {
                    log::warn!(
                        "unstable self-exciting spec: excitation/decay = {} >= 1; \
                         event counts may explode",
                        excitation / decay
                    );
                }
                Ok(())
            }
            IntensitySpec::Bimodal { t_max } => {
                if !(t_max > 0.0) {
                    return Err(SimError::BadSpec(format!("bimodal horizon must be positive, got {t_max}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed-form supremum over `[0, T]` for the inhomogeneous kinds; for
    /// the self-exciting kind the thinning bound is tracked dynamically and
    /// this returns the baseline-only bound.
    pub fn sup_intensity(&self) -> f64 {
        match *self {
            IntensitySpec::Hawkes { base, .. } => base,
            IntensitySpec::Sine | IntensitySpec::NegativeSine => 0.2,
            IntensitySpec::Constant => 0.1,
            IntensitySpec::Bimodal { .. } => 0.15,
        }
    }

    pub fn is_self_exciting(&self) -> bool {
        matches!(self, IntensitySpec::Hawkes { .. })
    }
}

/// Exact conditional intensity at `t` given the (sorted, strictly earlier)
/// event history.
pub fn intensity_at(spec: &IntensitySpec, t: f64, history: &[f64]) -> Result<f64, SimError> {
    if t < 0.0 {
        return Err(SimError::NegativeTime(t));
    }
    if history.windows(2).any(|w| w[1] <= w[0]) || history.last().is_some_and(|&h| h >= t) {
        return Err(SimError::BadHistory);
    }
    Ok(intensity_unchecked(spec, t, history))
}

fn intensity_unchecked(spec: &IntensitySpec, t: f64, history: &[f64]) -> f64 {
    match *spec {
        IntensitySpec::Hawkes { base, excitation, decay } => {
            base + excitation * history.iter().map(|&s| (-decay * (t - s)).exp()).sum::<f64>()
        }
        IntensitySpec::Sine => (std::f64::consts::PI * t / 50.0).sin() / 10.0 + 0.1,
        IntensitySpec::NegativeSine => -(std::f64::consts::PI * t / 50.0).sin() / 10.0 + 0.1,
        IntensitySpec::Constant => 0.1,
        IntensitySpec::Bimodal { t_max } => {
            let center = if t <= t_max / 2.0 { t_max / 4.0 } else { 3.0 * t_max / 4.0 };
            let width = t_max / 8.0;
            0.15 * (-(t - center).powi(2) / (2.0 * width * width)).exp()
        }
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Draws one sequence on `(0, t_max]` from `spec` by thinning.
pub fn simulate<R: Rng>(spec: &IntensitySpec, t_max: f64, rng: &mut R) -> Result<EventSequence, SimError> {
    spec.validate()?;
    if !(t_max > 0.0) {
        return Err(SimError::BadSpec(format!("horizon must be positive, got {t_max}")));
    }
    let events = match *spec {
        IntensitySpec::Hawkes { base, excitation, decay } => {
            let mut events = Vec::new();
            let mut t = 0.0;
            // Running sum of exp(-decay (t - t_j)); updated incrementally.
            let mut kernel_sum = 0.0;
            loop {
                let bound = base + excitation * kernel_sum;
                if bound <= 0.0 {
                    break; // no base rate and no history: nothing can occur
                }
                let gap = -open_unit(rng).ln() / bound;
                t += gap;
                if t > t_max {
                    break;
                }
                kernel_sum *= (-decay * gap).exp();
                let lambda = base + excitation * kernel_sum;
                if open_unit(rng) <= lambda / bound {
                    events.push(t);
                    kernel_sum += 1.0;
                }
                // Bound refreshes from the decayed state on the next pass,
                // for rejected candidates as well as accepted ones.
            }
            events
        }
        _ => {
            let bound = spec.sup_intensity();
            let mut events = Vec::new();
            let mut t = 0.0;
            loop {
                let gap = -open_unit(rng).ln() / bound;
                t += gap;
                if t > t_max {
                    break;
                }
                let lambda = intensity_unchecked(spec, t, &events);
                if open_unit(rng) <= lambda / bound {
                    events.push(t);
                }
            }
            events
        }
    };
    Ok(EventSequence::new(events, t_max)?)
}

/// Binned Monte-Carlo estimate of the intensity: per bin, the mean event
/// count across sequences divided by the bin width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalIntensity {
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub rates: Vec<f64>,
}

impl EmpiricalIntensity {
    /// Largest absolute per-bin difference against another estimate on the
    /// same binning.
    pub fn max_abs_diff(&self, other: &EmpiricalIntensity) -> f64 {
        assert_eq!(self.rates.len(), other.rates.len(), "binnings differ");
        self.rates
            .iter()
            .zip(&other.rates)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Estimates the empirical intensity of `sequences` (all sharing a horizon)
/// with bins of width `bin_width`.
pub fn empirical_intensity(
    sequences: &[EventSequence],
    bin_width: f64,
) -> Result<EmpiricalIntensity, SimError> {
    if sequences.is_empty() {
        return Err(SimError::NoSequences);
    }
    if !(bin_width > 0.0) {
        return Err(SimError::BadBinWidth(bin_width));
    }
    let t_max = sequences[0].t_max();
    if sequences.iter().any(|s| s.t_max() != t_max) {
        return Err(SimError::Data(DataError::MixedHorizons(
            t_max,
            sequences.iter().find(|s| s.t_max() != t_max).unwrap().t_max(),
        )));
    }
    let n_bins = (t_max / bin_width).ceil() as usize;
    let mut counts = vec![0.0_f64; n_bins];
    for seq in sequences {
        for &t in seq.timestamps() {
            let mut b = (t / bin_width) as usize;
            if b >= n_bins {
                b = n_bins - 1; // t == t_max lands in the final bin
            }
            counts[b] += 1.0;
        }
    }
    let n = sequences.len() as f64;
    let mut centers = Vec::with_capacity(n_bins);
    let mut rates = Vec::with_capacity(n_bins);
    for (b, c) in counts.iter().enumerate() {
        let start = b as f64 * bin_width;
        let end = (start + bin_width).min(t_max);
        centers.push((start + end) / 2.0);
        rates.push(c / n / (end - start));
    }
    Ok(EmpiricalIntensity { bin_width, centers, rates })
}

/// Expected intensity curve of a (possibly history-dependent) spec on the
/// same binning as [`empirical_intensity`], estimated by averaging the
/// analytic intensity at each bin center along simulated histories.
pub fn expected_intensity(
    spec: &IntensitySpec,
    t_max: f64,
    bin_width: f64,
    n_sims: usize,
    seed: u64,
) -> Result<EmpiricalIntensity, SimError> {
    spec.validate()?;
    let n_bins = (t_max / bin_width).ceil() as usize;
    let centers: Vec<f64> = (0..n_bins)
        .map(|b| {
            let start = b as f64 * bin_width;
            (start + (start + bin_width).min(t_max)) / 2.0
        })
        .collect();
    let mut rates = vec![0.0_f64; n_bins];
    for i in 0..n_sims {
        let mut rng = rng_from(sequence_seed(seed, i as u64));
        let seq = simulate(spec, t_max, &mut rng)?;
        let ts = seq.timestamps();
        for (b, &c) in centers.iter().enumerate() {
            let upto = ts.partition_point(|&t| t < c);
            rates[b] += intensity_unchecked(spec, c, &ts[..upto]);
        }
    }
    for r in &mut rates {
        *r /= n_sims as f64;
    }
    Ok(EmpiricalIntensity { bin_width, centers, rates })
}

const SHUFFLE_TAG: u64 = 0x51;

/// Self-exciting mixture protocol: per cluster, base and excitation drawn
/// uniformly from [0,1] with unit decay.
pub fn random_self_exciting_mixture(n_clusters: usize, seed: u64) -> Vec<IntensitySpec> {
    let mut rng = rng_from(mix_seed(seed, 0xA4));
    (0..n_clusters)
        .map(|_| IntensitySpec::Hawkes {
            base: rng.gen::<f64>(),
            excitation: rng.gen::<f64>(),
            decay: 1.0,
        })
        .collect()
}

/// Generates a labeled, shuffled dataset with `per_cluster` sequences from
/// each spec. Sequence `g` (in generation order) uses the stream
/// `seed ⊕ g`; the final shuffle uses its own derived stream, and record ids
/// are assigned after shuffling.
pub fn generate_dataset(
    specs: &[IntensitySpec],
    per_cluster: usize,
    t_max: f64,
    seed: u64,
) -> Result<Dataset, SimError> {
    if specs.is_empty() {
        return Err(SimError::BadSpec("no cluster specs given".into()));
    }
    if per_cluster == 0 {
        return Err(SimError::BadSpec("per-cluster count must be positive".into()));
    }
    let mut seqs = Vec::with_capacity(specs.len() * per_cluster);
    for (cluster, spec) in specs.iter().enumerate() {
        for j in 0..per_cluster {
            let index = (cluster * per_cluster + j) as u64;
            let mut rng = rng_from(sequence_seed(seed, index));
            seqs.push(simulate(spec, t_max, &mut rng)?.with_label(cluster));
        }
    }
    let mut shuffle_rng = rng_from(mix_seed(seed, SHUFFLE_TAG));
    // Fisher-Yates, explicit so the stream usage stays pinned.
    for i in (1..seqs.len()).rev() {
        let j = shuffle_rng.gen_range(0..=i);
        seqs.swap(i, j);
    }
    Ok(Dataset::from_sequences(seqs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_intensity_is_point_one() {
        let v = intensity_at(&IntensitySpec::Constant, 33.3, &[]).unwrap();
        assert_eq!(v, 0.1);
    }

    #[test]
    fn sine_peaks_at_quarter_period() {
        // sin(pi/2)/10 + 0.1 = 0.2
        let v = intensity_at(&IntensitySpec::Sine, 25.0, &[]).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn self_exciting_hand_value() {
        // base 0.5, excitation 0.3, decay 1, one event at 1.0, t = 2.0:
        // 0.5 + 0.3 e^{-1}
        let spec = IntensitySpec::Hawkes { base: 0.5, excitation: 0.3, decay: 1.0 };
        let v = intensity_at(&spec, 2.0, &[1.0]).unwrap();
        let expected = 0.5 + 0.3 * (-1.0_f64).exp();
        assert!((v - expected).abs() < 1e-15);
        assert!((expected - 0.6103638323514327).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_time_and_bad_history() {
        assert!(intensity_at(&IntensitySpec::Constant, -0.1, &[]).is_err());
        let spec = IntensitySpec::Hawkes { base: 0.5, excitation: 0.3, decay: 1.0 };
        assert!(intensity_at(&spec, 2.0, &[1.5, 1.0]).is_err());
        assert!(intensity_at(&spec, 2.0, &[2.5]).is_err());
    }

    #[test]
    fn vanishing_horizon_gives_empty_sequence() {
        let mut rng = rng_from(0);
        let seq = simulate(&IntensitySpec::Constant, 1e-9, &mut rng).unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn constant_rate_mean_count_matches_poisson() {
        let mut total = 0usize;
        let n = 1000;
        for i in 0..n {
            let mut rng = rng_from(sequence_seed(7, i));
            total += simulate(&IntensitySpec::Constant, 100.0, &mut rng).unwrap().len();
        }
        let mean = total as f64 / n as f64;
        assert!((9.5..=10.5).contains(&mean), "mean count {mean} outside [9.5, 10.5]");
    }

    #[test]
    fn single_event_empirical_rate() {
        let seq = EventSequence::new(vec![1.0], 10.0).unwrap();
        let emp = empirical_intensity(&[seq], 10.0).unwrap();
        assert_eq!(emp.rates.len(), 1);
        assert!((emp.rates[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empirical_intensity_is_deterministic() {
        let seqs: Vec<EventSequence> = (0..50)
            .map(|i| {
                let mut rng = rng_from(sequence_seed(3, i));
                simulate(&IntensitySpec::Sine, 100.0, &mut rng).unwrap()
            })
            .collect();
        let a = empirical_intensity(&seqs, 5.0).unwrap();
        let b = empirical_intensity(&seqs, 5.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_bins_concentrate() {
        let seqs: Vec<EventSequence> = (0..1000)
            .map(|i| {
                let mut rng = rng_from(sequence_seed(11, i));
                simulate(&IntensitySpec::Constant, 100.0, &mut rng).unwrap()
            })
            .collect();
        let emp = empirical_intensity(&seqs, 5.0).unwrap();
        assert_eq!(emp.rates.len(), 20);
        for r in &emp.rates {
            assert!((0.07..=0.13).contains(r), "bin rate {r} outside [0.07, 0.13]");
        }
    }

    #[test]
    fn sine_simulations_peak_and_trough_where_expected() {
        let seqs: Vec<EventSequence> = (0..2000)
            .map(|i| {
                let mut rng = rng_from(sequence_seed(5, i));
                simulate(&IntensitySpec::Sine, 100.0, &mut rng).unwrap()
            })
            .collect();
        let emp = empirical_intensity(&seqs, 5.0).unwrap();
        let argmax = emp.rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let argmin = emp.rates.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((emp.centers[argmax] - 25.0).abs() <= 10.0, "peak at {}", emp.centers[argmax]);
        assert!((emp.centers[argmin] - 75.0).abs() <= 10.0, "trough at {}", emp.centers[argmin]);
    }

    #[test]
    fn dataset_counts_and_labels() {
        let specs = [IntensitySpec::Sine, IntensitySpec::NegativeSine];
        let ds = generate_dataset(&specs, 200, 100.0, 42).unwrap();
        assert_eq!(ds.len(), 400);
        let labels = ds.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 200);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 200);
    }

    #[test]
    fn four_cluster_histogram_is_uniform() {
        let specs = [
            IntensitySpec::Sine,
            IntensitySpec::NegativeSine,
            IntensitySpec::Constant,
            IntensitySpec::Bimodal { t_max: 100.0 },
        ];
        let ds = generate_dataset(&specs, 50, 100.0, 9).unwrap();
        let labels = ds.labels().unwrap();
        for c in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 50);
        }
    }

    #[test]
    fn single_cluster_labels_all_equal() {
        let ds = generate_dataset(&[IntensitySpec::Constant], 20, 100.0, 1).unwrap();
        assert!(ds.labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn generation_is_reproducible() {
        let specs = [IntensitySpec::Sine, IntensitySpec::Constant];
        let a = generate_dataset(&specs, 30, 100.0, 77).unwrap();
        let b = generate_dataset(&specs, 30, 100.0, 77).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write(&mut buf_a).unwrap();
        b.write(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn thinning_matches_homogeneous_mean() {
        // |mean count - mu T| <= 4 sqrt(mu T / n)
        let mu = 0.1;
        let t_max = 100.0;
        let n = 2000;
        let mut total = 0usize;
        for i in 0..n {
            let mut rng = rng_from(sequence_seed(23, i));
            total += simulate(&IntensitySpec::Constant, t_max, &mut rng).unwrap().len();
        }
        let mean = total as f64 / n as f64;
        let bound = 4.0 * (mu * t_max / n as f64).sqrt();
        assert!((mean - mu * t_max).abs() <= bound, "|{mean} - 10| > {bound}");
    }

    #[test]
    fn self_exciting_empirical_matches_expected_curve() {
        let spec = IntensitySpec::Hawkes { base: 0.1, excitation: 0.4, decay: 1.0 };
        let n = 2000;
        let seqs: Vec<EventSequence> = (0..n)
            .map(|i| {
                let mut rng = rng_from(sequence_seed(31, i as u64));
                simulate(&spec, 100.0, &mut rng).unwrap()
            })
            .collect();
        let emp = empirical_intensity(&seqs, 5.0).unwrap();
        let expected = expected_intensity(&spec, 100.0, 5.0, n, 31).unwrap();
        let err = emp.max_abs_diff(&expected);
        assert!(err < 0.05, "max-bin deviation {err} >= 0.05");
    }
}
