//! Expectation-maximization over a mixture of event-sequence policies.
//!
//! The loop alternates two moves. The E-step trains a sequence classifier on
//! rollouts labeled by the policy that produced them — sampling policies in
//! proportion to current cluster sizes — and then relabels the whole dataset
//! with the classifier's argmax. The M-step refits each cluster's policy and
//! discriminator against its assigned sequences with the adversarial
//! imitation loop. Early iterations additionally lend each cluster the
//! outside sequences most confidently attributed to it, a shrinking
//! augmentation that keeps small clusters from starving before the policies
//! differentiate.
//!
//! Everything is driven by derived seeds in stable record-id order, so
//! results do not depend on dataset file order or worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gail::{gail_tpp, Discriminator, DiscriminatorConfig, GailConfig, GailError, RoundDiag};
use crate::metrics::{purity, rand_index, ClusteringResult, MetricsError};
use crate::nn::checkpoint::{self, CheckpointError, Meta};
use crate::nn::{
    optimizer_step, CellKind, Dense, Graph, OptimizerConfig, ParamSet, RecurrentCell, Sc,
};
use crate::policy::{Policy, PolicyConfig, PolicyError};
use crate::seeding::{mix_seed, rng_from};
use crate::sim::{DataError, Dataset, EventSequence};

const INIT_TAG: u64 = 0x101;
const PARTITION_TAG: u64 = 0x102;
const ESTEP_TAG: u64 = 0x200;
const MSTEP_TAG: u64 = 0x300;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Gail(#[from] GailError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub cell: CellKind,
    /// Multiplier applied to inter-event times before the embedding.
    pub input_scale: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { hidden_dim: 16, cell: CellKind::Lstm, input_scale: 1.0 }
    }
}

/// Embedding layer, recurrent layer and softmax head over `N` clusters.
#[derive(Debug, Clone)]
pub struct SequenceClassifier {
    pub config: ClassifierConfig,
    pub n_clusters: usize,
    pub params: ParamSet,
    embed: Dense,
    cell: RecurrentCell,
    out: Dense,
}

impl SequenceClassifier {
    pub fn new<R: Rng>(n_clusters: usize, config: ClassifierConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let d = config.hidden_dim;
        let embed = Dense::new(&mut params, "embed", 1, d, rng);
        let cell = RecurrentCell::new(&mut params, "rnn", config.cell, d, d, rng);
        let out = Dense::new(&mut params, "out", d, n_clusters, rng);
        Self { config, n_clusters, params, embed, cell, out }
    }

    /// Logits for a sequence, recorded on `g`. Empty sequences are scored
    /// from the initial state.
    fn logit_nodes(&self, g: &mut Graph, seq: &EventSequence) -> crate::nn::Vc {
        let mut state = self.cell.init_state(g);
        for a in seq.inter_event_times() {
            let a_v = g.const_v(&[a * self.config.input_scale]);
            let e = self.embed.forward(g, a_v);
            state = self.cell.step(g, &state, e);
        }
        self.out.forward(g, state.hidden)
    }

    /// Probability vector over the `N` clusters.
    pub fn classify(&self, seq: &EventSequence) -> Vec<f64> {
        let mut g = Graph::new(&self.params);
        let logits = self.logit_nodes(&mut g, seq);
        g.softmax_values(logits)
    }

    /// Argmax label; exact ties resolve to the lowest cluster index.
    pub fn hard_label(&self, seq: &EventSequence) -> usize {
        argmax(&self.classify(seq))
    }

    /// Cross-entropy training over labeled sequences; returns the mean loss
    /// of the final epoch.
    pub fn train<R: Rng>(
        &mut self,
        samples: &[(EventSequence, usize)],
        epochs: usize,
        minibatch: usize,
        optimizer: &OptimizerConfig,
        rng: &mut R,
    ) -> f64 {
        assert!(!samples.is_empty(), "classifier training set must be nonempty");
        let minibatch = minibatch.max(1);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut last_epoch_loss = 0.0;
        for _ in 0..epochs {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(minibatch) {
                let mut g = Graph::new(&self.params);
                let mut terms: Vec<(Sc, f64)> = Vec::with_capacity(chunk.len());
                for &idx in chunk {
                    let (seq, label) = &samples[idx];
                    let logits = self.logit_nodes(&mut g, seq);
                    let ce = g.cross_entropy(logits, *label);
                    terms.push((ce, 1.0 / chunk.len() as f64));
                }
                let loss = g.weighted_sum(&terms);
                epoch_loss += g.value_s(loss) * chunk.len() as f64;
                let store = g.backward(loss);
                drop(g);
                self.params.accumulate(&store);
                optimizer_step(&mut self.params, optimizer);
            }
            last_epoch_loss = epoch_loss / samples.len() as f64;
        }
        last_epoch_loss
    }

    /// Mean cross-entropy over labeled sequences plus its gradients;
    /// the handle the gradient test suites check against finite differences.
    pub fn loss_and_grads(
        &self,
        samples: &[(EventSequence, usize)],
    ) -> (f64, crate::nn::GradStore) {
        assert!(!samples.is_empty(), "need at least one sample");
        let mut g = Graph::new(&self.params);
        let mut terms: Vec<(Sc, f64)> = Vec::with_capacity(samples.len());
        for (seq, label) in samples {
            let logits = self.logit_nodes(&mut g, seq);
            let ce = g.cross_entropy(logits, *label);
            terms.push((ce, 1.0 / samples.len() as f64));
        }
        let loss = g.weighted_sum(&terms);
        (g.value_s(loss), g.backward(loss))
    }

    pub fn save_meta(&self) -> Meta {
        vec![
            ("kind".to_string(), "classifier".to_string()),
            ("cell".to_string(), self.config.cell.as_str().to_string()),
            ("hidden_dim".to_string(), self.config.hidden_dim.to_string()),
            ("n_clusters".to_string(), self.n_clusters.to_string()),
            ("input_scale".to_string(), format!("{:.16e}", self.config.input_scale)),
        ]
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, out: &mut W) -> Result<(), EmError> {
        checkpoint::write_params(out, &self.save_meta(), &self.params)?;
        Ok(())
    }

    pub fn read_checkpoint<R: std::io::BufRead>(input: R) -> Result<Self, EmError> {
        let (meta, loaded) = checkpoint::read_params(input)?;
        let get = |key: &str| {
            checkpoint::meta_value(&meta, key)
                .ok_or_else(|| CheckpointError::Mismatch(format!("missing meta key {key}")))
        };
        let config = ClassifierConfig {
            hidden_dim: get("hidden_dim")?
                .parse()
                .map_err(|_| CheckpointError::Mismatch("bad hidden_dim".into()))?,
            cell: CellKind::parse(get("cell")?)
                .ok_or_else(|| CheckpointError::Mismatch("bad cell kind".into()))?,
            input_scale: get("input_scale")?
                .parse()
                .map_err(|_| CheckpointError::Mismatch("bad input_scale".into()))?,
        };
        let n_clusters = get("n_clusters")?
            .parse()
            .map_err(|_| CheckpointError::Mismatch("bad n_clusters".into()))?;
        let mut rng = rng_from(0);
        let mut clf = SequenceClassifier::new(n_clusters, config, &mut rng);
        checkpoint::load_into(&mut clf.params, &loaded)?;
        Ok(clf)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Settings for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Number of latent policies `N`.
    pub n_clusters: usize,
    /// Generated training-set size per E-step.
    pub classifier_batch: usize,
    pub classifier_epochs: usize,
    pub classifier_minibatch: usize,
    pub classifier_optimizer: OptimizerConfig,
    /// Hard cap on EM iterations.
    pub max_iterations: usize,
    /// Stop once the fraction of relabeled sequences drops below this.
    pub convergence_threshold: f64,
    /// Augmentation schedule `f(k) = initial · decay^k`.
    pub augment_initial: f64,
    pub augment_decay: f64,
    pub policy: PolicyConfig,
    pub discriminator: DiscriminatorConfig,
    pub classifier: ClassifierConfig,
    pub gail: GailConfig,
    /// Rounds for the warm-up fit on the random partition; `None` uses
    /// `gail.rounds`.
    pub warmup_rounds: Option<usize>,
    /// Start every policy's rate head at the dataset's mean event rate and
    /// scale all recurrent inputs by it.
    pub calibrate_to_data: bool,
    /// M-step worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            classifier_batch: 256,
            classifier_epochs: 20,
            classifier_minibatch: 32,
            classifier_optimizer: OptimizerConfig::with_learning_rate(1e-3),
            max_iterations: 50,
            convergence_threshold: 0.01,
            augment_initial: 0.2,
            augment_decay: 0.5,
            policy: PolicyConfig { hidden_dim: 16, ..Default::default() },
            discriminator: DiscriminatorConfig { hidden_dim: 16, ..Default::default() },
            classifier: ClassifierConfig::default(),
            // Desk-tuned imitation settings: myopic suffix sums and a
            // discriminator that adapts faster than the policy keep event
            // counts from limit-cycling at small batch sizes.
            gail: GailConfig {
                entropy_coeff: 1e-3,
                rollout_batch: 32,
                disc_steps: 2,
                discount: 0.0,
                policy_optimizer: OptimizerConfig::with_learning_rate(3e-3),
                disc_optimizer: OptimizerConfig::with_learning_rate(1e-2),
                rounds: 150,
            },
            warmup_rounds: Some(300),
            calibrate_to_data: true,
            workers: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<(), EmError> {
        if self.n_clusters < 2 {
            return Err(EmError::Config(format!(
                "need at least two clusters, got {}",
                self.n_clusters
            )));
        }
        if self.classifier_batch < self.n_clusters {
            return Err(EmError::Config(format!(
                "classifier batch {} smaller than cluster count {}",
                self.classifier_batch, self.n_clusters
            )));
        }
        if !(self.convergence_threshold >= 0.0) {
            return Err(EmError::Config("convergence threshold must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_initial) || !(0.0..=1.0).contains(&self.augment_decay) {
            return Err(EmError::Config("augmentation schedule values must lie in [0,1]".into()));
        }
        self.gail.validate().map_err(EmError::Config)?;
        self.classifier_optimizer.validate().map_err(EmError::Config)?;
        Ok(())
    }
}

/// The EM iterate: `N` policies and discriminators, the classifier, and the
/// current assignment of every dataset entry.
pub struct MixtureState {
    pub policies: Vec<Policy>,
    pub discriminators: Vec<Discriminator>,
    pub classifier: SequenceClassifier,
    /// Cluster index per dataset entry (aligned with `Dataset::entries`).
    pub assignments: Vec<usize>,
    pub iteration: usize,
    /// Sizes of the training sets the policies last fit on; the E-step's
    /// proportional sampling uses these so that an augmented (or rescued)
    /// cluster keeps contributing classifier samples.
    pub mixing_sizes: Vec<usize>,
    /// Entry positions in stable record-id order.
    canonical: Vec<usize>,
}

/// What one E-step reports back.
pub struct EStepOutcome {
    /// Fraction of entries whose label changed.
    pub label_change: f64,
    /// Posterior row per entry (aligned with `Dataset::entries`).
    pub posteriors: Vec<Vec<f64>>,
    pub classifier_loss: f64,
    /// How many generated training samples each policy contributed.
    pub samples_per_cluster: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cluster_sizes: Vec<usize>,
    pub label_change: f64,
    /// Mean over the dataset of `log π_{y_j}(x_j)` under the assigned policy.
    pub mean_assigned_log_prob: f64,
    /// Final-epoch classifier loss; absent for the warm-up record.
    pub classifier_loss: Option<f64>,
    pub purity: Option<f64>,
    pub rand_index: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLogRecord {
    pub iteration: usize,
    pub cluster: usize,
    pub round: usize,
    pub disc_loss: f64,
    pub surrogate_loss: f64,
    pub mean_len: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitHistory {
    pub iterations: Vec<IterationRecord>,
    pub training_log: Vec<TrainingLogRecord>,
    pub converged: bool,
}

impl MixtureState {
    /// Fresh models and a uniformly random partition.
    pub fn init(dataset: &Dataset, cfg: &EmConfig, seed: u64) -> Result<Self, EmError> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(EmError::EmptyDataset);
        }
        let horizon = dataset.horizon()?;

        let mut canonical: Vec<usize> = (0..dataset.len()).collect();
        canonical.sort_by_key(|&i| dataset.entries[i].id);

        let mean_rate = dataset.sequences().map(EventSequence::len).sum::<usize>() as f64
            / dataset.len() as f64
            / horizon;

        let mut policy_cfg = cfg.policy;
        let mut disc_cfg = cfg.discriminator;
        let mut clf_cfg = cfg.classifier;
        if cfg.calibrate_to_data && mean_rate > 0.0 {
            policy_cfg.input_scale = mean_rate;
            disc_cfg.input_scale = mean_rate;
            clf_cfg.input_scale = mean_rate;
        }

        let mut policies = Vec::with_capacity(cfg.n_clusters);
        let mut discriminators = Vec::with_capacity(cfg.n_clusters);
        for i in 0..cfg.n_clusters {
            let mut rng = rng_from(mix_seed(seed, INIT_TAG + i as u64));
            let mut policy = Policy::new(policy_cfg, &mut rng);
            if cfg.calibrate_to_data && mean_rate > 0.0 {
                // Rate heads start near the marginal event rate; the
                // recurrent weights still differ per cluster, which is what
                // the first E-step amplifies.
                policy.set_initial_rate(initial_head_rate(cfg.policy.distribution, mean_rate));
            }
            policies.push(policy);
            discriminators.push(Discriminator::new(disc_cfg, &mut rng));
        }
        let mut clf_rng = rng_from(mix_seed(seed, INIT_TAG + 0xFF));
        let classifier = SequenceClassifier::new(cfg.n_clusters, clf_cfg, &mut clf_rng);

        // Uniform random assignment, consumed in record-id order.
        let mut part_rng = rng_from(mix_seed(seed, PARTITION_TAG));
        let mut assignments = vec![0usize; dataset.len()];
        for &pos in &canonical {
            assignments[pos] = part_rng.gen_range(0..cfg.n_clusters);
        }

        let mut state = Self {
            policies,
            discriminators,
            classifier,
            assignments,
            iteration: 0,
            mixing_sizes: Vec::new(),
            canonical,
        };
        state.mixing_sizes = state.cluster_sizes(cfg.n_clusters);
        Ok(state)
    }

    pub fn cluster_sizes(&self, n_clusters: usize) -> Vec<usize> {
        let mut sizes = vec![0usize; n_clusters];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Cluster member positions in record-id order.
    fn members(&self, cluster: usize) -> Vec<usize> {
        self.canonical.iter().copied().filter(|&p| self.assignments[p] == cluster).collect()
    }

    /// Trains the classifier on policy-generated samples and relabels the
    /// dataset.
    pub fn e_step(
        &mut self,
        dataset: &Dataset,
        cfg: &EmConfig,
        seed: u64,
    ) -> Result<EStepOutcome, EmError> {
        let horizon = dataset.horizon()?;
        let sizes = self.mixing_sizes.clone();
        let total: f64 = sizes.iter().sum::<usize>() as f64;
        let mut rng = rng_from(mix_seed(seed, ESTEP_TAG + self.iteration as u64));

        // Labeled training set drawn from the policies with cluster-size
        // proportional mixing (with replacement).
        let mut samples = Vec::with_capacity(cfg.classifier_batch);
        let mut nonempty = vec![false; cfg.n_clusters];
        let mut drawn = vec![0usize; cfg.n_clusters];
        for _ in 0..cfg.classifier_batch {
            let u: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut cluster = cfg.n_clusters - 1;
            for (i, &s) in sizes.iter().enumerate() {
                acc += s as f64;
                if u < acc {
                    cluster = i;
                    break;
                }
            }
            let rollout = self.policies[cluster].rollout(horizon, &mut rng)?;
            nonempty[cluster] |= !rollout.sequence.is_empty();
            drawn[cluster] += 1;
            samples.push((rollout.sequence, cluster));
        }
        for (i, (&ok, &n)) in nonempty.iter().zip(&drawn).enumerate() {
            if n > 0 && !ok {
                log::warn!("policy {i} generated only empty sequences this E-step");
            }
        }

        let classifier_loss = self.classifier.train(
            &samples,
            cfg.classifier_epochs,
            cfg.classifier_minibatch,
            &cfg.classifier_optimizer,
            &mut rng,
        );

        // Relabel every sequence; iterate in id order so nothing depends on
        // file order.
        let mut posteriors = vec![Vec::new(); dataset.len()];
        let mut changed = 0usize;
        for &pos in &self.canonical {
            let probs = self.classifier.classify(&dataset.entries[pos].seq);
            let label = argmax(&probs);
            if label != self.assignments[pos] {
                changed += 1;
            }
            self.assignments[pos] = label;
            posteriors[pos] = probs;
        }
        Ok(EStepOutcome {
            label_change: changed as f64 / dataset.len() as f64,
            posteriors,
            classifier_loss,
            samples_per_cluster: drawn,
        })
    }

    /// Per-cluster training sets: the cluster's members plus the top
    /// `fraction` of outside sequences ranked by posterior mass. Borrowed
    /// sequences are training-only; assignments stay untouched. An emptied
    /// cluster borrows at least `classifier_batch / N` sequences. Sets come
    /// back in record-id order.
    pub fn augmented_training_sets(
        &self,
        dataset: &Dataset,
        posteriors: &[Vec<f64>],
        fraction: f64,
        cfg: &EmConfig,
    ) -> Vec<Vec<usize>> {
        let mut sets = Vec::with_capacity(cfg.n_clusters);
        for cluster in 0..cfg.n_clusters {
            let n_members = self.canonical.iter().filter(|&&p| self.assignments[p] == cluster).count();
            let outside: Vec<usize> =
                self.canonical.iter().copied().filter(|&p| self.assignments[p] != cluster).collect();
            let mut borrow = ((fraction * outside.len() as f64).floor() as usize).min(outside.len());
            if n_members == 0 {
                let floor = (cfg.classifier_batch + cfg.n_clusters - 1) / cfg.n_clusters;
                borrow = borrow.max(floor.min(outside.len()));
            }
            let mut include = vec![false; dataset.len()];
            for &p in &self.canonical {
                if self.assignments[p] == cluster {
                    include[p] = true;
                }
            }
            if borrow > 0 {
                let mut ranked = outside;
                ranked.sort_by(|&a, &b| {
                    posteriors[b][cluster]
                        .total_cmp(&posteriors[a][cluster])
                        .then_with(|| dataset.entries[a].id.cmp(&dataset.entries[b].id))
                });
                for &p in ranked.iter().take(borrow) {
                    include[p] = true;
                }
            }
            sets.push(self.canonical.iter().copied().filter(|&p| include[p]).collect());
        }
        sets
    }

    /// Refits every cluster's policy and discriminator on its training set;
    /// clusters run in parallel with independent derived seeds.
    pub fn m_step(
        &mut self,
        dataset: &Dataset,
        training_sets: &[Vec<usize>],
        cfg: &EmConfig,
        rounds: usize,
        seed: u64,
    ) -> Result<Vec<TrainingLogRecord>, EmError> {
        let iteration = self.iteration;
        let gail_cfg = GailConfig { rounds, ..cfg.gail };
        let step_seed = mix_seed(seed, MSTEP_TAG + iteration as u64);
        let results: Vec<Result<Vec<RoundDiag>, GailError>> = self
            .policies
            .par_iter_mut()
            .zip(self.discriminators.par_iter_mut())
            .enumerate()
            .map(|(cluster, (policy, disc))| {
                let data: Vec<&EventSequence> =
                    training_sets[cluster].iter().map(|&p| &dataset.entries[p].seq).collect();
                if data.is_empty() {
                    log::warn!("cluster {cluster} has no training data; models left unchanged");
                    return Ok(Vec::new());
                }
                gail_tpp(policy, disc, &data, &gail_cfg, mix_seed(step_seed, cluster as u64))
            })
            .collect();

        let mut log_records = Vec::new();
        for (cluster, res) in results.into_iter().enumerate() {
            for d in res? {
                log_records.push(TrainingLogRecord {
                    iteration,
                    cluster,
                    round: d.round,
                    disc_loss: d.disc_loss,
                    surrogate_loss: d.surrogate_loss,
                    mean_len: d.mean_len,
                });
            }
        }
        Ok(log_records)
    }

    /// Mean over the dataset of the assigned policy's sequence
    /// log-density — the progress diagnostic tracked across iterations.
    pub fn mean_assigned_log_prob(&self, dataset: &Dataset) -> Result<f64, EmError> {
        let mut total = 0.0;
        for &pos in &self.canonical {
            let e = &dataset.entries[pos];
            total += self.policies[self.assignments[pos]].log_prob_sequence(&e.seq)?.total;
        }
        Ok(total / dataset.len() as f64)
    }

    fn record(
        &self,
        dataset: &Dataset,
        cfg: &EmConfig,
        label_change: f64,
        classifier_loss: Option<f64>,
    ) -> Result<IterationRecord, EmError> {
        let truth = dataset.labels();
        let (p, ri) = match truth {
            Some(t) => {
                let result = ClusteringResult::new(self.assignments.clone(), Some(t))?;
                (Some(purity(&result)?), Some(rand_index(&result)?))
            }
            None => (None, None),
        };
        Ok(IterationRecord {
            iteration: self.iteration,
            cluster_sizes: self.cluster_sizes(cfg.n_clusters),
            label_change,
            mean_assigned_log_prob: self.mean_assigned_log_prob(dataset)?,
            classifier_loss,
            purity: p,
            rand_index: ri,
        })
    }
}

fn initial_head_rate(dist: crate::policy::ActionDistribution, mean_rate: f64) -> f64 {
    match dist {
        crate::policy::ActionDistribution::Exponential => mean_rate,
        // A Rayleigh action with rate parameter θ has mean sqrt(π/(2θ));
        // match the mean inter-event time 1/mean_rate.
        crate::policy::ActionDistribution::Rayleigh => {
            std::f64::consts::FRAC_PI_2 * mean_rate * mean_rate
        }
    }
}

/// Output of [`fit`].
pub struct FitOutput {
    pub state: MixtureState,
    pub history: FitHistory,
}

/// Runs the full EM loop: warm-up fit on a random partition, then E/M
/// iterations until the label-change fraction drops below the threshold or
/// the iteration cap is reached.
pub fn fit(dataset: &Dataset, cfg: &EmConfig, seed: u64) -> Result<FitOutput, EmError> {
    fit_with_observer(dataset, cfg, seed, |_, _| ())
}

/// Like [`fit`], invoking `observer` after the warm-up and after every EM
/// iteration — e.g. to write per-iteration checkpoints.
pub fn fit_with_observer<F>(
    dataset: &Dataset,
    cfg: &EmConfig,
    seed: u64,
    mut observer: F,
) -> Result<FitOutput, EmError>
where
    F: FnMut(&MixtureState, &IterationRecord) + Send,
{
    let mut run = move || fit_inner(dataset, cfg, seed, &mut observer);
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| EmError::Config(format!("worker pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

fn fit_inner<F>(
    dataset: &Dataset,
    cfg: &EmConfig,
    seed: u64,
    observer: &mut F,
) -> Result<FitOutput, EmError>
where
    F: FnMut(&MixtureState, &IterationRecord),
{
    let mut state = MixtureState::init(dataset, cfg, seed)?;
    let mut history = FitHistory::default();

    // Warm-up: one imitation fit per cluster on the random partition.
    let warmup_sets: Vec<Vec<usize>> =
        (0..cfg.n_clusters).map(|c| state.members(c)).collect();
    let warmup_rounds = cfg.warmup_rounds.unwrap_or(cfg.gail.rounds);
    let log = state.m_step(dataset, &warmup_sets, cfg, warmup_rounds, seed)?;
    history.training_log.extend(log);
    let rec = state.record(dataset, cfg, 1.0, None)?;
    observer(&state, &rec);
    history.iterations.push(rec);

    for k in 1..=cfg.max_iterations {
        state.iteration = k;
        let outcome = state.e_step(dataset, cfg, seed)?;
        if outcome.label_change < cfg.convergence_threshold {
            let rec =
                state.record(dataset, cfg, outcome.label_change, Some(outcome.classifier_loss))?;
            observer(&state, &rec);
            history.iterations.push(rec);
            history.converged = true;
            break;
        }
        let fraction = cfg.augment_initial * cfg.augment_decay.powi((k - 1) as i32);
        let training_sets =
            state.augmented_training_sets(dataset, &outcome.posteriors, fraction, cfg);
        state.mixing_sizes = training_sets.iter().map(Vec::len).collect();
        let log = state.m_step(dataset, &training_sets, cfg, cfg.gail.rounds, seed)?;
        history.training_log.extend(log);
        let rec =
            state.record(dataset, cfg, outcome.label_change, Some(outcome.classifier_loss))?;
        observer(&state, &rec);
        history.iterations.push(rec);
    }
    Ok(FitOutput { state, history })
}
