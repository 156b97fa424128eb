//! Output-file plumbing: checkpoint directories and the tab-separated
//! history, training-log, labels, metrics and intensity tables.
//!
//! Every file is deterministic given (config, seed); wall-clock timing goes
//! to stderr only.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tppmix::em::{FitHistory, MixtureState, SequenceClassifier};
use tppmix::gail::Discriminator;
use tppmix::policy::Policy;
use tppmix::sim::Dataset;

/// Shortest-round-trip decimal for table cells.
fn fmt(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_history(path: &Path, history: &FitHistory) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# iteration\tcluster_sizes\tlabel_change\tmean_assigned_log_prob\tclassifier_loss\tpurity\trand_index"
    )?;
    for r in &history.iterations {
        let sizes = r
            .cluster_sizes
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.iteration,
            sizes,
            fmt(r.label_change),
            fmt(r.mean_assigned_log_prob),
            r.classifier_loss.map_or("-".into(), fmt),
            r.purity.map_or("-".into(), fmt),
            r.rand_index.map_or("-".into(), fmt),
        )?;
    }
    Ok(())
}

pub fn write_training_log(path: &Path, history: &FitHistory) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# iteration\tcluster\tround\tdisc_loss\tsurrogate_loss\tmean_len")?;
    for r in &history.training_log {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.iteration,
            r.cluster,
            r.round,
            fmt(r.disc_loss),
            fmt(r.surrogate_loss),
            fmt(r.mean_len)
        )?;
    }
    Ok(())
}

/// Final label per record id.
pub fn write_labels(path: &Path, dataset: &Dataset, assignments: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# id\tcluster")?;
    let mut rows: Vec<(u64, usize)> =
        dataset.entries.iter().map(|e| e.id).zip(assignments.iter().copied()).collect();
    rows.sort_unstable();
    for (id, cluster) in rows {
        writeln!(out, "{id}\t{cluster}")?;
    }
    Ok(())
}

/// Reads a labels table back as (id, cluster) pairs.
pub fn read_labels(path: &Path) -> Result<Vec<(u64, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, cluster) = line
            .split_once('\t')
            .with_context(|| format!("labels line {}: expected two columns", i + 1))?;
        rows.push((id.trim().parse()?, cluster.trim().parse()?));
    }
    Ok(rows)
}

pub struct CheckpointLayout {
    pub root: PathBuf,
}

impl CheckpointLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.join("checkpoints") }
    }

    fn cluster_dir(&self, cluster: usize) -> PathBuf {
        self.root.join(format!("cluster_{cluster}"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.root.join("classifier.ckpt")
    }

    /// Writes per-iteration snapshots of every model.
    pub fn write_iteration(&self, state: &MixtureState, iteration: usize) -> Result<()> {
        for (i, (policy, disc)) in
            state.policies.iter().zip(&state.discriminators).enumerate()
        {
            let dir = self.cluster_dir(i);
            fs::create_dir_all(&dir)?;
            let mut out = BufWriter::new(File::create(dir.join(format!("iter_{iteration:03}.ckpt")))?);
            policy.write_checkpoint(&mut out)?;
            let mut out =
                BufWriter::new(File::create(dir.join(format!("iter_{iteration:03}.disc.ckpt")))?);
            disc.write_checkpoint(&mut out)?;
        }
        Ok(())
    }

    /// Writes the final models (the ones `evaluate` and `export` read).
    pub fn write_final(&self, state: &MixtureState) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        for (i, (policy, disc)) in
            state.policies.iter().zip(&state.discriminators).enumerate()
        {
            let dir = self.cluster_dir(i);
            fs::create_dir_all(&dir)?;
            let mut out = BufWriter::new(File::create(dir.join("final.ckpt"))?);
            policy.write_checkpoint(&mut out)?;
            let mut out = BufWriter::new(File::create(dir.join("final.disc.ckpt"))?);
            disc.write_checkpoint(&mut out)?;
        }
        let mut out = BufWriter::new(File::create(self.classifier_path())?);
        state.classifier.write_checkpoint(&mut out)?;
        Ok(())
    }

    /// Loads the final policies (cluster order) and the classifier.
    pub fn load_final(&self) -> Result<(Vec<Policy>, Vec<Discriminator>, SequenceClassifier)> {
        let classifier = SequenceClassifier::read_checkpoint(BufReader::new(
            File::open(self.classifier_path())
                .with_context(|| format!("opening {}", self.classifier_path().display()))?,
        ))?;
        let mut policies = Vec::new();
        let mut discs = Vec::new();
        for i in 0.. {
            let dir = self.cluster_dir(i);
            if !dir.join("final.ckpt").exists() {
                break;
            }
            policies.push(Policy::read_checkpoint(BufReader::new(File::open(
                dir.join("final.ckpt"),
            )?))?);
            discs.push(Discriminator::read_checkpoint(BufReader::new(File::open(
                dir.join("final.disc.ckpt"),
            )?))?);
        }
        anyhow::ensure!(!policies.is_empty(), "no cluster checkpoints under {}", self.root.display());
        Ok((policies, discs, classifier))
    }
}

/// Metrics report: one metric per line plus a config echo in comments.
pub struct MetricsReport {
    lines: Vec<(String, f64)>,
    comments: Vec<String>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self { lines: Vec::new(), comments: Vec::new() }
    }

    pub fn comment(&mut self, text: impl Into<String>) {
        self.comments.push(text.into());
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.lines.push((name.into(), value));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# metric\tvalue")?;
        for (name, value) in &self.lines {
            writeln!(out, "{name}\t{}", fmt(*value))?;
        }
        Ok(())
    }

    pub fn print(&self) {
        for (name, value) in &self.lines {
            println!("{name}\t{}", fmt(*value));
        }
    }
}

/// Per-cluster intensity table: data estimate vs policy estimate per bin.
pub fn write_intensity_table(
    path: &Path,
    rows: &[(usize, f64, f64, f64)],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# cluster\tbin_center\trate_data\trate_policy")?;
    for (cluster, center, data, policy) in rows {
        writeln!(out, "{cluster}\t{}\t{}\t{}", fmt(*center), fmt(*data), fmt(*policy))?;
    }
    Ok(())
}
