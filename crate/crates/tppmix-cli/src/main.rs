//! Command-line front end: dataset generation, mixture training, evaluation
//! and intensity export. Every command is reproducible: outputs are fully
//! determined by (config, seed), worker count included.

mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use files::{CheckpointLayout, MetricsReport};
use tppmix::em::{self};
use tppmix::metrics::{clustering_consistency, matched_eid, purity, rand_index, ClusteringResult};
use tppmix::seeding::{mix_seed, rng_from};
use tppmix::sim::{empirical_intensity, generate_dataset, Dataset, EventSequence};

#[derive(Parser)]
#[command(name = "tppmix", version, about = "Cluster event sequences by a mixture of learned policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides config and TPPMIX_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset file (overrides the config).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled dataset from the configured cluster mixture.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Cluster mixture preset: no-hawkes-k2|k3|k4, hawkes-k2|k3|k4.
        #[arg(long)]
        preset: Option<String>,
        /// Sequences per cluster (overrides the config).
        #[arg(long)]
        per_cluster: Option<usize>,
    },
    /// Fit the policy mixture to a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Cap on EM iterations (overrides the config).
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Skip per-iteration checkpoints (final ones are always written).
        #[arg(long)]
        no_iteration_checkpoints: bool,
    },
    /// Compute clustering metrics from labels or trained checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Predicted-labels file (id<TAB>cluster).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Checkpoint directory root (the training output directory).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Consistency trials (0 disables; expensive: trains per trial).
        #[arg(long)]
        cc_trials: Option<usize>,
    },
    /// Export per-cluster empirical-intensity tables for data and policies.
    ExportIntensity {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory root (the training output directory).
        #[arg(long)]
        checkpoints: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { common, preset, per_cluster } => cmd_generate(common, preset, per_cluster),
        Command::Train { common, max_iterations, no_iteration_checkpoints } => {
            cmd_train(common, max_iterations, no_iteration_checkpoints)
        }
        Command::Evaluate { common, labels, checkpoints, cc_trials } => {
            cmd_evaluate(common, labels, checkpoints, cc_trials)
        }
        Command::ExportIntensity { common, checkpoints } => cmd_export(common, checkpoints),
    }
}

/// Loads the config and applies the shared flag overrides.
fn resolve(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(ds) = &common.dataset {
        cfg.dataset = Some(ds.clone());
    }
    if let Some(w) = common.workers {
        cfg.em.workers = w;
    }
    let out = cfg.resolved_output_dir(common.out.as_deref());
    cfg.output_dir = Some(out.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn echo_config(cfg: &RunConfig, out: &std::path::Path) -> Result<()> {
    std::fs::write(out.join("resolved.toml"), cfg.echo()?)?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().context("no dataset given (use --dataset or the config)")?;
    Dataset::read_file(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn cmd_generate(common: Common, preset: Option<String>, per_cluster: Option<usize>) -> Result<()> {
    let (mut cfg, out) = resolve(&common)?;
    if let Some(p) = &preset {
        cfg.apply_preset(p)?;
    }
    if let Some(n) = per_cluster {
        cfg.generate.per_cluster = n;
    }
    let dataset = generate_dataset(
        &cfg.generate.clusters,
        cfg.generate.per_cluster,
        cfg.generate.t_max,
        cfg.seed,
    )?;
    let path = out.join("dataset.jsonl");
    dataset.write_file(&path)?;
    echo_config(&cfg, &out)?;

    let labels = dataset.labels().unwrap_or_default();
    for c in 0..cfg.generate.clusters.len() {
        let n = labels.iter().filter(|&&l| l == c).count();
        println!("cluster {c}: {n} sequences");
    }
    println!("wrote {} records to {}", dataset.len(), path.display());
    Ok(())
}

fn cmd_train(
    common: Common,
    max_iterations: Option<usize>,
    no_iteration_checkpoints: bool,
) -> Result<()> {
    let (mut cfg, out) = resolve(&common)?;
    if let Some(m) = max_iterations {
        cfg.em.max_iterations = m;
    }
    let dataset = load_dataset(&cfg)?;
    echo_config(&cfg, &out)?;

    let layout = CheckpointLayout::new(&out);
    let t0 = Instant::now();
    let result = em::fit_with_observer(&dataset, &cfg.em, cfg.seed, |state, record| {
        if !no_iteration_checkpoints {
            if let Err(e) = layout.write_iteration(state, record.iteration) {
                log::warn!("checkpoint write failed at iteration {}: {e}", record.iteration);
            }
        }
        eprintln!(
            "iteration {:>3}: sizes {:?} label-change {:.4} log-prob {:.3} ({:.1?})",
            record.iteration,
            record.cluster_sizes,
            record.label_change,
            record.mean_assigned_log_prob,
            t0.elapsed()
        );
    })?;

    layout.write_final(&result.state)?;
    files::write_history(&out.join("history.tsv"), &result.history)?;
    files::write_training_log(&out.join("training_log.tsv"), &result.history)?;
    files::write_labels(&out.join("labels.tsv"), &dataset, &result.state.assignments)?;

    let last = result.history.iterations.last().context("empty history")?;
    println!(
        "finished after iteration {} (converged: {}); cluster sizes {:?}",
        last.iteration, result.history.converged, last.cluster_sizes
    );
    if let (Some(p), Some(ri)) = (last.purity, last.rand_index) {
        println!("purity\t{p}");
        println!("rand_index\t{ri}");
    }
    eprintln!("wall time: {:.1?}", t0.elapsed());
    Ok(())
}

fn cmd_evaluate(
    common: Common,
    labels: Option<PathBuf>,
    checkpoints: Option<PathBuf>,
    cc_trials: Option<usize>,
) -> Result<()> {
    let (mut cfg, out) = resolve(&common)?;
    if let Some(t) = cc_trials {
        cfg.evaluate.cc_trials = t;
    }
    let dataset = load_dataset(&cfg)?;
    echo_config(&cfg, &out)?;

    let mut report = MetricsReport::new();
    report.comment(format!("seed {}", cfg.seed));
    report.comment(format!(
        "bin_width {} eid_sims {} cc_trials {} cc_split {}",
        cfg.evaluate.bin_width, cfg.evaluate.eid_sims, cfg.evaluate.cc_trials, cfg.evaluate.cc_split
    ));

    let truth = dataset.labels();

    let predicted: Option<Vec<usize>> = if let Some(path) = &labels {
        let rows = files::read_labels(path)?;
        let mut by_id = std::collections::HashMap::new();
        for (id, c) in rows {
            by_id.insert(id, c);
        }
        Some(
            dataset
                .entries
                .iter()
                .map(|e| {
                    by_id
                        .get(&e.id)
                        .copied()
                        .with_context(|| format!("labels file misses id {}", e.id))
                })
                .collect::<Result<_>>()?,
        )
    } else if let Some(dir) = &checkpoints {
        let layout = CheckpointLayout::new(dir);
        let (_, _, classifier) = layout.load_final()?;
        Some(dataset.sequences().map(|s| classifier.hard_label(s)).collect())
    } else {
        None
    };

    if let Some(pred) = &predicted {
        if truth.is_some() {
            let result = ClusteringResult::new(pred.clone(), truth.clone())?;
            report.push("purity", purity(&result)?);
            report.push("rand_index", rand_index(&result)?);
        } else {
            log::warn!("dataset has no true labels; purity and rand_index skipped");
        }
    }

    if let Some(dir) = &checkpoints {
        if truth.is_some() {
            let layout = CheckpointLayout::new(dir);
            let (policies, _, _) = layout.load_final()?;
            let eids = matched_eid(
                &policies,
                &dataset,
                cfg.evaluate.bin_width,
                cfg.evaluate.eid_sims,
                mix_seed(cfg.seed, 0xE1D0),
            )?;
            for (i, v) in eids.iter().enumerate() {
                report.push(format!("matched_eid_class_{i}"), *v);
            }
            report.push("matched_eid_mean", eids.iter().sum::<f64>() / eids.len() as f64);
        }
    }

    if cfg.evaluate.cc_trials >= 2 {
        let em_cfg = cfg.em.clone();
        let runner = move |train: &[&EventSequence], test: &[&EventSequence], seed: u64| {
            consistency_runner(&em_cfg, train, test, seed)
        };
        let cc = clustering_consistency(
            &runner,
            &dataset,
            cfg.evaluate.cc_trials,
            cfg.evaluate.cc_split,
            mix_seed(cfg.seed, 0xCC0),
        )?;
        report.push("clustering_consistency", cc);
    }

    report.write(&out.join("metrics.tsv"))?;
    report.print();
    Ok(())
}

/// Trains on the fold and labels the test fold; the consistency metric
/// reruns this per trial.
fn consistency_runner(
    cfg: &tppmix::em::EmConfig,
    train: &[&EventSequence],
    test: &[&EventSequence],
    seed: u64,
) -> Vec<usize> {
    let train_ds = Dataset::from_sequences(train.iter().map(|s| (*s).clone()).collect());
    let mut fold_cfg = cfg.clone();
    fold_cfg.workers = 0; // already inside a parallel trial
    match em::fit(&train_ds, &fold_cfg, seed) {
        Ok(result) => test.iter().map(|s| result.state.classifier.hard_label(s)).collect(),
        Err(e) => {
            log::warn!("consistency trial failed ({e}); labeling all zero");
            vec![0; test.len()]
        }
    }
}

fn cmd_export(common: Common, checkpoints: PathBuf) -> Result<()> {
    let (cfg, out) = resolve(&common)?;
    let dataset = load_dataset(&cfg)?;
    echo_config(&cfg, &out)?;

    let layout = CheckpointLayout::new(&checkpoints);
    let (policies, _, classifier) = layout.load_final()?;
    let t_max = dataset.horizon()?;
    let bw = cfg.export.bin_width;

    // Data side: group by true label when present, else by classifier label.
    let groups: Vec<usize> = match dataset.labels() {
        Some(t) => t,
        None => dataset.sequences().map(|s| classifier.hard_label(s)).collect(),
    };
    let n_groups = policies.len();
    if groups.iter().any(|&g| g >= n_groups) {
        bail!("dataset labels exceed the number of trained policies");
    }

    let mut rows = Vec::new();
    for cluster in 0..n_groups {
        let data: Vec<EventSequence> = dataset
            .entries
            .iter()
            .zip(&groups)
            .filter(|(_, &g)| g == cluster)
            .map(|(e, _)| e.seq.clone())
            .collect();
        let data_emp = if data.is_empty() { None } else { Some(empirical_intensity(&data, bw)?) };

        let mut rng = rng_from(mix_seed(cfg.seed, 0xE8 + cluster as u64));
        let rollouts: Vec<EventSequence> = (0..cfg.export.sims)
            .map(|_| policies[cluster].rollout(t_max, &mut rng).map(|r| r.sequence))
            .collect::<Result<_, _>>()?;
        let policy_emp = empirical_intensity(&rollouts, bw)?;

        for (b, center) in policy_emp.centers.iter().enumerate() {
            let data_rate = data_emp.as_ref().map_or(f64::NAN, |e| e.rates[b]);
            rows.push((cluster, *center, data_rate, policy_emp.rates[b]));
        }
    }
    let path = out.join("intensity.tsv");
    files::write_intensity_table(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}
